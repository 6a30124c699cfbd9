import type { LiveResponse, RecordsGeoJson, RegistryDoc } from "./types.js";

export interface RecordFilters {
  machine?: string;
  field?: string;
  work_type?: string;
}

async function getJson<T>(url: string): Promise<T> {
  const resp = await fetch(url);
  if (!resp.ok) {
    throw new Error(`${url} -> ${resp.status}`);
  }
  return (await resp.json()) as T;
}

export function recordsUrl(base: string, filters: RecordFilters): string {
  const params = new URLSearchParams({ format: "geojson" });
  for (const [key, value] of Object.entries(filters)) {
    if (value) params.set(key, value);
  }
  return `${base}/api/v1/records?${params.toString()}`;
}

export const fetchRegistry = (base: string) =>
  getJson<RegistryDoc>(`${base}/api/v1/registry`);

export const fetchRecords = (base: string, filters: RecordFilters) =>
  getJson<RecordsGeoJson>(recordsUrl(base, filters));

export const fetchLive = (base: string) =>
  getJson<LiveResponse>(`${base}/api/v1/live`);
