import type { ResultRow } from "./types";

/** Rows whose outcome falls in the half-open window [min, max),
 *  mirroring the backend's outcome filter semantics. */
export function brushRows(rows: ResultRow[], min: number, max: number): ResultRow[] {
  return rows.filter((row) => row.outcome >= min && row.outcome < max);
}

export function brushedIds(rows: ResultRow[], min: number, max: number): number[] {
  return brushRows(rows, min, max)
    .map((row) => row.cf_id)
    .sort((a, b) => a - b);
}
