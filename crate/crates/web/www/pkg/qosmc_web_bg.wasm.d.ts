/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const blerCurves: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
export const comparePolicies: (a: number, b: number) => [number, number, number, number];
export const fadedAtMargin: (a: number) => number;
export const layout: () => [number, number, number, number];
export const selectAt: (a: number, b: number, c: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
