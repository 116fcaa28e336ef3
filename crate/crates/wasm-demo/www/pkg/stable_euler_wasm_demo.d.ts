/* tslint:disable */
/* eslint-disable */

/**
 * Stable density against its proxy bound on `[0, x_max]`.
 *
 * Layout: `n` rows of `[x, p(t, x), p̄(t, x)]`.
 */
export function kernel_vs_proxy(alpha: number, t: number, x_max: number, n: number): Float64Array;

/**
 * Histogram of `samples` unit-time increments on `[-range, range]`.
 *
 * Layout: `bins` rows of `[center, empirical density, exact bin average]`.
 */
export function sampler_histogram(alpha: number, seed: bigint, samples: number, bins: number, range: number): Float64Array;

/**
 * Time-1 density of the Euler scheme with `n` steps for the capped-power
 * drift `sign(x) min(|x|, 1)^β`, optionally modulated by a square wave
 * flipping mid-step.
 *
 * Layout: rows of `[x, randomized, left point, driftless]`.
 */
export function scheme_density(alpha: number, beta: number, amplitude: number, steps: number, square_wave: boolean, dx: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly kernel_vs_proxy: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly sampler_histogram: (a: number, b: bigint, c: number, d: number, e: number) => [number, number, number, number];
    readonly scheme_density: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
