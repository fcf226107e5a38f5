/* tslint:disable */
/* eslint-disable */

/**
 * An image resized to the native side together with its pyramid and
 * attention weights.
 */
export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    attention(i: number, j: number): Float64Array;
    image(): Uint8Array;
    /**
     * Side length of pyramid level `level`.
     */
    level_side(level: number): number;
    constructor(rgba: Uint8Array, width: number, height: number, seed: number);
    /**
     * Principal-component RGBA rendering of pyramid level `level`.
     */
    pca(level: number): Uint8Array;
    set_sigmas(log_sigma_dist: number, log_sigma_sim: number): void;
}

export function slice_layout(width: number, height: number): Uint32Array;

/**
 * One image from the synthetic corpus as RGBA; `kind` cycles through
 * gradients, checkerboards, rectangles and strokes.
 */
export function synth_image(seed: number, kind: number, size: number): Uint8Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_attention: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_image: (a: number) => [number, number];
    readonly demo_level_side: (a: number, b: number) => number;
    readonly demo_new: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly demo_pca: (a: number, b: number) => [number, number, number, number];
    readonly demo_set_sigmas: (a: number, b: number, c: number) => [number, number];
    readonly slice_layout: (a: number, b: number) => [number, number, number, number];
    readonly synth_image: (a: number, b: number, c: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
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
