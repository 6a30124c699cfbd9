// Fixed work-type palette so screenshots stay comparable across runs.
// "unknown" keeps a reserved gray no other type uses.

export const UNKNOWN_COLOR = "#9e9e9e";

export const WORK_TYPE_COLORS: Record<string, string> = {
  planting: "#2e7d32",
  harvesting: "#ef6c00",
  spraying: "#0288d1",
  grass_cutting: "#7cb342",
  harrowing: "#8d6e63",
  seeding: "#fbc02d",
  plowing: "#5e35b1",
  rotary_tilling: "#d81b60",
  unknown: UNKNOWN_COLOR,
};

export function colorFor(workType: string): string {
  return WORK_TYPE_COLORS[workType] ?? UNKNOWN_COLOR;
}
