/* tslint:disable */
/* eslint-disable */

/**
 * A scored pool held between calls so the objective weights can be moved
 * without rescoring.
 */
export class PoolDemo {
    free(): void;
    [Symbol.dispose](): void;
    constructor(size: number, width: number, seed: number);
    /**
     * `[{id, trace_metric, kappa}]` for every scored architecture.
     */
    pointsJson(): string;
    /**
     * Pool member minimizing `κ/M + μ(M² − ν)²`.
     */
    select(mu: number, nu: number): string;
}

/**
 * Both terms of the non-realizable score over M, as JSON.
 */
export function boundCurve(kappa: number, rate: number, t: number, m: number, samples: number): string;

/**
 * Wide and deep kernels on the same orthonormal inputs, as JSON.
 */
export function topologyKernels(n: number, layers: number, m: number, seed: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_pooldemo_free: (a: number, b: number) => void;
    readonly boundCurve: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly pooldemo_new: (a: number, b: number, c: number) => [number, number, number];
    readonly pooldemo_pointsJson: (a: number) => [number, number];
    readonly pooldemo_select: (a: number, b: number, c: number) => [number, number, number, number];
    readonly topologyKernels: (a: number, b: number, c: number, d: number) => [number, number, number, number];
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
