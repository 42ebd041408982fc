/* tslint:disable */
/* eslint-disable */

/**
 * One playable episode of a built-in environment.
 */
export class Game {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Returns `{"observation", "done", "score"}` where `score` is null until
     * the episode ends.
     */
    act(action: string): string;
    done(): boolean;
    goal(): string;
    max_steps(): number;
    constructor(family: string, seed: bigint);
    observation(): string;
    score(): number;
    steps_taken(): number;
}

/**
 * `records` is a JSON array of `{"score": f, "visits": n}`. Returns
 * `{"rows": [{normalized, sampling_score, probability}], "sum": f}` or
 * `{"error": ...}`.
 */
export function explore_sampling(records: string, baseline: number, lambda: number, alpha: number, temperature: number): string;

/**
 * `outcomes` is a string of `s`/`f` characters, one per logged task.
 * Returns `{"successes": n, "failures": n, "picked": [indices]}`.
 */
export function stratified_pick(outcomes: string, k: number, seed: bigint): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_game_free: (a: number, b: number) => void;
    readonly explore_sampling: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
    readonly game_act: (a: number, b: number, c: number) => [number, number];
    readonly game_done: (a: number) => number;
    readonly game_goal: (a: number) => [number, number];
    readonly game_max_steps: (a: number) => number;
    readonly game_new: (a: number, b: number, c: bigint) => [number, number, number];
    readonly game_observation: (a: number) => [number, number];
    readonly game_score: (a: number) => number;
    readonly game_steps_taken: (a: number) => number;
    readonly stratified_pick: (a: number, b: number, c: number, d: bigint) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
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
