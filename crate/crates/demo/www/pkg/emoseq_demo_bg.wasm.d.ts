/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_frameview_free: (a: number, b: number) => void;
export const ctc_report: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const emotions: () => [number, number];
export const frameview_channel: (a: number, b: number, c: number) => [number, number];
export const frameview_count: (a: number) => number;
export const frameview_start_time: (a: number, b: number) => number;
export const metrics_report: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const tone_frames: (a: number, b: number, c: number, d: bigint) => [number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_drop_slice: (a: number, b: number) => void;
export const __wbindgen_start: () => void;
