/* tslint:disable */
/* eslint-disable */

/**
 * Spectrogram frames of a synthetic harmonic tone.
 */
export class FrameView {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Row-major 40×40 values of one channel; row 0 is the lowest band.
     */
    channel(frame: number, channel: number): Float32Array;
    count(): number;
    start_time(frame: number): number;
}

/**
 * Best path, its collapsed labeling, the constrained single-emotion decode
 * and `P(label | y)` for `label` (letters, e.g. `AB`) by both the forward
 * recursion and path enumeration.
 */
export function ctc_report(posteriors: string, label: string): string;

export function emotions(): string[];

/**
 * Classification metrics as JSON for two lists of emotion names.
 */
export function metrics_report(truth: string, predicted: string): string;

/**
 * Renders `seconds` of a three-harmonic tone at `fundamental_hz` plus seeded
 * white noise and converts it to frames.
 */
export function tone_frames(fundamental_hz: number, seconds: number, noise: number, seed: bigint): FrameView;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_frameview_free: (a: number, b: number) => void;
    readonly ctc_report: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly emotions: () => [number, number];
    readonly frameview_channel: (a: number, b: number, c: number) => [number, number];
    readonly frameview_count: (a: number) => number;
    readonly frameview_start_time: (a: number, b: number) => number;
    readonly metrics_report: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly tone_frames: (a: number, b: number, c: number, d: bigint) => [number, number, number];
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
