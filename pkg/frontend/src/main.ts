import { ApiClient, ApiError } from "./api";
import { brushedIds } from "./brush";
import { renderGroups } from "./groups";
import { initialState, reduce, type UiState } from "./state";
import { highlightRows, renderMatrix } from "./table";
import type { ResultsPayload, SegmentView, TaskView } from "./types";

interface AppElements {
  taskInput: HTMLInputElement;
  runInput: HTMLInputElement;
  loadButton: HTMLButtonElement;
  evaluatorSelect: HTMLSelectElement;
  brushLow: HTMLInputElement;
  brushHigh: HTMLInputElement;
  brushButton: HTMLButtonElement;
  clearButton: HTMLButtonElement;
  status: HTMLElement;
  matrix: HTMLElement;
  groups: HTMLElement;
}

function grab(doc: Document): AppElements {
  const byId = <T extends HTMLElement>(id: string) => {
    const el = doc.getElementById(id);
    if (!el) throw new Error(`missing #${id}`);
    return el as T;
  };
  return {
    taskInput: byId("task-id"),
    runInput: byId("run-id"),
    loadButton: byId("load"),
    evaluatorSelect: byId("evaluator"),
    brushLow: byId("brush-low"),
    brushHigh: byId("brush-high"),
    brushButton: byId("brush"),
    clearButton: byId("clear-brush"),
    status: byId("status"),
    matrix: byId("matrix"),
    groups: byId("groups"),
  };
}

export class App {
  private state: UiState = initialState;
  private task: TaskView | null = null;
  private results: ResultsPayload | null = null;

  constructor(
    private readonly doc: Document,
    private readonly api: ApiClient,
    private readonly els: AppElements,
  ) {}

  wire(): void {
    this.els.loadButton.addEventListener("click", () => void this.load());
    this.els.brushButton.addEventListener("click", () => this.applyBrush());
    this.els.clearButton.addEventListener("click", () => {
      this.state = reduce(this.state, { type: "clear-brush" });
      this.refreshBrush();
    });
    this.els.evaluatorSelect.addEventListener("change", () => {
      const index = Number(this.els.evaluatorSelect.value);
      this.state = reduce(this.state, { type: "set-evaluator", index });
      void this.load();
    });
  }

  private async load(): Promise<void> {
    const taskId = this.els.taskInput.value.trim();
    const runId = this.els.runInput.value.trim();
    if (!taskId || !runId) {
      this.els.status.textContent = "enter a task id and a run id";
      return;
    }
    try {
      this.task = await this.api.getTask(taskId);
      this.results = await this.api.getResults(runId, {
        evaluator: this.state.evaluator,
      });
      this.populateEvaluators();
      this.renderAll();
      this.els.status.textContent = `${this.results.rows.length} counterfactuals`;
      await this.loadGroups(runId);
    } catch (err) {
      this.els.status.textContent =
        err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
    }
  }

  private async loadGroups(runId: string): Promise<void> {
    this.els.groups.replaceChildren();
    if (this.state.selection.length === 0) return;
    const payload = await this.api.groupBy(
      runId,
      this.state.selection,
      this.state.evaluator,
    );
    const segments = this.segments();
    this.els.groups.appendChild(renderGroups(this.doc, payload, segments));
  }

  private segments(): SegmentView[] {
    return this.task ? this.task.segments : [];
  }

  private populateEvaluators(): void {
    if (!this.task) return;
    const select = this.els.evaluatorSelect;
    select.replaceChildren();
    this.task.evaluators.forEach((ev, index) => {
      const option = this.doc.createElement("option");
      option.value = String(index);
      option.textContent = ev.name;
      option.selected = index === this.state.evaluator;
      select.appendChild(option);
    });
  }

  private renderAll(): void {
    if (!this.results) return;
    this.els.matrix.replaceChildren();
    const table = renderMatrix(this.doc, this.results);
    table.querySelectorAll("th.segment-header").forEach((th) => {
      th.addEventListener("click", () => {
        const sid = Number((th as HTMLElement).dataset.segmentId);
        this.state = reduce(this.state, { type: "toggle-segment", id: sid });
        th.classList.toggle("selected", this.state.selection.includes(sid));
        void this.loadGroups(this.els.runInput.value.trim());
      });
    });
    this.els.matrix.appendChild(table);
    this.refreshBrush();
  }

  private applyBrush(): void {
    const low = Number(this.els.brushLow.value);
    const high = Number(this.els.brushHigh.value);
    if (!Number.isFinite(low) || !Number.isFinite(high)) return;
    this.state = reduce(this.state, { type: "set-brush", range: [low, high] });
    this.refreshBrush();
  }

  private refreshBrush(): void {
    if (!this.results) return;
    const table = this.els.matrix.querySelector("table");
    if (!table) return;
    const ids = this.state.brush
      ? brushedIds(this.results.rows, this.state.brush[0], this.state.brush[1])
      : [];
    highlightRows(table, ids);
    if (this.state.brush) {
      const [lo, hi] = this.state.brush;
      this.els.status.textContent = `brush [${lo}, ${hi}): ${ids.length} rows (${ids.join(", ")})`;
    }
  }
}

export function bootstrap(doc: Document, api = new ApiClient()): App {
  const app = new App(doc, api, grab(doc));
  app.wire();
  return app;
}

if (typeof document !== "undefined" && document.getElementById("matrix")) {
  bootstrap(document);
}
