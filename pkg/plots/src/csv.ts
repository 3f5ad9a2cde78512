/**
 * Readers for the simulator's output files.
 *
 * CSV files are strict: a header row, comma-separated numeric fields,
 * no quoting. Any malformed row is reported with its 1-based line
 * number so the offending output can be found immediately.
 */

import { readFileSync } from "fs";
import Papa from "papaparse";

export class DataError extends Error {
  constructor(
    message: string,
    public readonly file: string,
    public readonly line?: number,
  ) {
    super(line === undefined ? `${file}: ${message}` : `${file}:${line}: ${message}`);
  }
}

export interface Table {
  file: string;
  columns: string[];
  /** rows[i][j] = numeric value of column j in data row i */
  rows: number[][];
}

export function readTable(file: string, requiredColumns?: string[]): Table {
  let text: string;
  try {
    text = readFileSync(file, "utf-8");
  } catch (err) {
    throw new DataError(`cannot read file (${(err as Error).message})`, file);
  }
  const parsed = Papa.parse<string[]>(text.trimEnd(), { delimiter: "," });
  if (parsed.data.length === 0) {
    throw new DataError("empty file", file, 1);
  }
  const columns = (parsed.data[0] as string[]).map((c) => c.trim());
  if (requiredColumns) {
    for (const col of requiredColumns) {
      if (!columns.includes(col)) {
        throw new DataError(`missing column '${col}' (found: ${columns.join(",")})`, file, 1);
      }
    }
  }
  const rows: number[][] = [];
  for (let i = 1; i < parsed.data.length; i++) {
    const raw = parsed.data[i] as string[];
    if (raw.length === 1 && raw[0].trim() === "") continue;
    const line = i + 1;
    if (raw.length !== columns.length) {
      throw new DataError(`expected ${columns.length} fields, got ${raw.length}`, file, line);
    }
    const row: number[] = [];
    for (let j = 0; j < raw.length; j++) {
      const cell = raw[j].trim();
      const value = cell === "" ? NaN : Number(cell);
      if (cell !== "" && Number.isNaN(value)) {
        throw new DataError(`field '${columns[j]}' is not a number: '${cell}'`, file, line);
      }
      row.push(value);
    }
    rows.push(row);
  }
  if (rows.length === 0) {
    throw new DataError("no data rows", file, 1);
  }
  return { file, columns, rows };
}

export function column(table: Table, name: string): number[] {
  const idx = table.columns.indexOf(name);
  if (idx < 0) {
    throw new DataError(`missing column '${name}'`, table.file, 1);
  }
  return table.rows.map((r) => r[idx]);
}

export interface Report {
  file: string;
  lhs: number;
  rhs: number;
  se: number;
  samples: number;
  pass: boolean;
}

export function readReport(file: string): Report {
  let payload: Record<string, unknown>;
  try {
    payload = JSON.parse(readFileSync(file, "utf-8"));
  } catch (err) {
    throw new DataError(`cannot parse report JSON (${(err as Error).message})`, file);
  }
  for (const key of ["lhs", "rhs", "se", "pass"]) {
    if (!(key in payload)) {
      throw new DataError(`report is missing field '${key}'`, file);
    }
  }
  return {
    file,
    lhs: payload.lhs as number,
    rhs: payload.rhs as number,
    se: payload.se as number,
    samples: (payload.samples as number) ?? 0,
    pass: Boolean(payload.pass),
  };
}
