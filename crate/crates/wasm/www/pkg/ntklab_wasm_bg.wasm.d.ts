/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_pooldemo_free: (a: number, b: number) => void;
export const boundCurve: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const pooldemo_new: (a: number, b: number, c: number) => [number, number, number];
export const pooldemo_pointsJson: (a: number) => [number, number];
export const pooldemo_select: (a: number, b: number, c: number) => [number, number, number, number];
export const topologyKernels: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
