/** UI state and its pure reducer. */

export interface UiState {
  selection: number[];
  brush: [number, number] | null;
  evaluator: number;
}

export type UiAction =
  | { type: "toggle-segment"; id: number }
  | { type: "set-brush"; range: [number, number] }
  | { type: "clear-brush" }
  | { type: "set-evaluator"; index: number }
  | { type: "reset" };

export const initialState: UiState = {
  selection: [],
  brush: null,
  evaluator: 0,
};

export function reduce(state: UiState, action: UiAction): UiState {
  switch (action.type) {
    case "toggle-segment": {
      const selection = state.selection.includes(action.id)
        ? state.selection.filter((sid) => sid !== action.id)
        : [...state.selection, action.id].sort((a, b) => a - b);
      return { ...state, selection };
    }
    case "set-brush": {
      const [lo, hi] = action.range;
      return { ...state, brush: lo <= hi ? [lo, hi] : [hi, lo] };
    }
    case "clear-brush":
      return { ...state, brush: null };
    case "set-evaluator":
      return { ...state, evaluator: action.index, brush: null };
    case "reset":
      return initialState;
  }
}
