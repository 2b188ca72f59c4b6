/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const di_surface: (a: number, b: number, c: number, d: number) => [number, number];
export const gibbs_vs_exact: (a: number, b: number, c: number) => [number, number];
export const shrinkage_mse: (a: number, b: number, c: number, d: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
