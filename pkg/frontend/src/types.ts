// Shapes of the /api/v1/* responses the app consumes.

export interface RecordProperties {
  id: string;
  machine: string;
  field: string;
  work_type: string;
  implement: string | null;
  start: string;
  end: string;
  duration_s: number;
  fix_count: number;
  distance_m: number;
  flags: string[];
}

export interface RecordFeature {
  type: "Feature";
  geometry: { type: "LineString"; coordinates: [number, number][] };
  properties: RecordProperties;
}

export interface RecordsGeoJson {
  type: "FeatureCollection";
  features: RecordFeature[];
}

export interface LivePosition {
  machine: string;
  t: string;
  lat: number;
  lon: number;
  field: string | null;
  implement: string | null;
  staleness_s: number;
}

export interface LiveResponse {
  positions: LivePosition[];
}

export interface RegistryMachine {
  id: string;
  name: string;
  class: "spv" | "mpv";
  work_type?: string;
}

export interface RegistryImplement {
  id: string;
  name: string;
  beacon_uid: string;
  work_type: string;
}

export interface RegistryField {
  id: string;
  name: string;
  ring: [number, number][];
}

export interface RegistryDoc {
  machines: RegistryMachine[];
  implements: RegistryImplement[];
  fields: RegistryField[];
}
