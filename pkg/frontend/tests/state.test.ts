import { describe, expect, it } from "vitest";

import { initialState, reduce, type UiState } from "../src/state";

describe("reduce", () => {
  it("toggles segments in and out, keeping the selection sorted", () => {
    let state = reduce(initialState, { type: "toggle-segment", id: 4 });
    state = reduce(state, { type: "toggle-segment", id: 1 });
    expect(state.selection).toEqual([1, 4]);

    state = reduce(state, { type: "toggle-segment", id: 4 });
    expect(state.selection).toEqual([1]);
  });

  it("normalizes an inverted brush window", () => {
    const state = reduce(initialState, { type: "set-brush", range: [0.8, 0.2] });
    expect(state.brush).toEqual([0.2, 0.8]);
  });

  it("clears the brush", () => {
    let state = reduce(initialState, { type: "set-brush", range: [0, 0.5] });
    state = reduce(state, { type: "clear-brush" });
    expect(state.brush).toBeNull();
  });

  it("switching evaluators drops the brush but keeps the selection", () => {
    let state: UiState = { selection: [2, 5], brush: [0, 0.5], evaluator: 0 };
    state = reduce(state, { type: "set-evaluator", index: 1 });
    expect(state.evaluator).toBe(1);
    expect(state.brush).toBeNull();
    expect(state.selection).toEqual([2, 5]);
  });

  it("reset restores the initial state", () => {
    const messy: UiState = { selection: [9], brush: [0.1, 0.9], evaluator: 3 };
    expect(reduce(messy, { type: "reset" })).toEqual(initialState);
  });

  it("never mutates its input", () => {
    const before: UiState = { selection: [1], brush: null, evaluator: 0 };
    const frozen = Object.freeze({ ...before, selection: [...before.selection] });
    reduce(frozen as UiState, { type: "toggle-segment", id: 2 });
    reduce(frozen as UiState, { type: "set-brush", range: [0, 1] });
    expect(frozen).toEqual(before);
  });
});
