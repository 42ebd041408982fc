/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_game_free: (a: number, b: number) => void;
export const explore_sampling: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
export const game_act: (a: number, b: number, c: number) => [number, number];
export const game_done: (a: number) => number;
export const game_goal: (a: number) => [number, number];
export const game_max_steps: (a: number) => number;
export const game_new: (a: number, b: number, c: bigint) => [number, number, number];
export const game_observation: (a: number) => [number, number];
export const game_score: (a: number) => number;
export const game_steps_taken: (a: number) => number;
export const stratified_pick: (a: number, b: number, c: number, d: bigint) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
