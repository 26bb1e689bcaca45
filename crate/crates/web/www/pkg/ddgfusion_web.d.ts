/* tslint:disable */
/* eslint-disable */

/**
 * Trains a single-BLOSUM62 model on a `variant,ddg` CSV (fused with a
 * simulated CSV when one is given) and returns `variant,mean,sd` rows for
 * the queries.
 */
export function gp_predict(pdb: string, experimental_csv: string, simulated_csv: string, queries_csv: string): string;

/**
 * Row-major normalized Gram matrix of one bundled matrix over the variants
 * of a `variant` CSV.
 */
export function kernel_heatmap(pdb: string, matrix: string, variants_csv: string): Float64Array;

/**
 * Names of the bundled substitution matrices that pass validation.
 */
export function matrix_names(): string[];

/**
 * Samples the scaling posterior from `pairs` laid out as
 * `[y_exp0, y_sim0, y_exp1, y_sim1, ...]` and evaluates it on `grid`.
 * Returns the posterior mean for every grid point followed by the
 * standard deviation for every grid point.
 */
export function scaling_band(pairs: Float64Array, grid: Float64Array, samples: number, seed: bigint): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly gp_predict: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number, number];
    readonly kernel_heatmap: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly matrix_names: () => [number, number];
    readonly scaling_band: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_drop_slice: (a: number, b: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
