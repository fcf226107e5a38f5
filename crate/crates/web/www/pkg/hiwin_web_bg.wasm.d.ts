/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const demo_attention: (a: number, b: number, c: number) => [number, number, number, number];
export const demo_image: (a: number) => [number, number];
export const demo_level_side: (a: number, b: number) => number;
export const demo_new: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const demo_pca: (a: number, b: number) => [number, number, number, number];
export const demo_set_sigmas: (a: number, b: number, c: number) => [number, number];
export const slice_layout: (a: number, b: number) => [number, number, number, number];
export const synth_image: (a: number, b: number, c: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_start: () => void;
