import { divergingColor, maxAbsolute } from "./color";
import { isShapResult, type ResultsPayload, type SegmentView } from "./types";

/** Counterfactual matrix: one column per segment (header tinted by its
 *  attribution, red positive / blue negative), one row per counterfactual. */
export function renderMatrix(doc: Document, payload: ResultsPayload): HTMLTableElement {
  const labels = new Map<number, string>(
    payload.segments.map((s: SegmentView) => [s.id, s.label]),
  );
  const phiBySegment = new Map<number, number>();
  const shap = payload.shap;
  if (isShapResult(shap)) {
    shap.segment_ids.forEach((sid, i) => phiBySegment.set(sid, shap.phi[i]));
  }
  const scale = maxAbsolute([...phiBySegment.values()]);

  const table = doc.createElement("table");
  table.className = "matrix";
  const head = table.createTHead().insertRow();

  const idHeader = doc.createElement("th");
  idHeader.textContent = "#";
  head.appendChild(idHeader);

  for (const sid of payload.segment_ids) {
    const th = doc.createElement("th");
    th.className = "segment-header";
    th.dataset.segmentId = String(sid);
    const phi = phiBySegment.get(sid);
    if (phi !== undefined) {
      th.dataset.phi = String(phi);
      th.style.backgroundColor = divergingColor(phi, scale);
      th.title = `${labels.get(sid) ?? sid}  phi=${phi.toFixed(4)}`;
    }
    th.textContent = labels.get(sid) ?? String(sid);
    head.appendChild(th);
  }
  for (const name of ["outcome", "text"]) {
    const th = doc.createElement("th");
    th.textContent = name;
    head.appendChild(th);
  }

  const body = table.createTBody();
  for (const row of payload.rows) {
    const tr = body.insertRow();
    tr.dataset.cfId = String(row.cf_id);
    tr.insertCell().textContent = String(row.cf_id);
    payload.segment_ids.forEach((sid, i) => {
      const cell = tr.insertCell();
      const included = row.bits[i] === "1";
      cell.className = included ? "included" : "excluded";
      cell.dataset.segmentId = String(sid);
      cell.textContent = included ? "●" : "·";
    });
    const outcome = tr.insertCell();
    outcome.className = "outcome";
    outcome.dataset.value = String(row.outcome);
    outcome.textContent = row.outcome.toFixed(2);
    const text = tr.insertCell();
    text.className = "cf-text";
    text.textContent = row.text;
  }
  return table;
}

/** Restrict the matrix to the given counterfactual ids (brush result). */
export function highlightRows(table: HTMLTableElement, cfIds: number[]): void {
  const keep = new Set(cfIds.map(String));
  for (const row of table.querySelectorAll<HTMLTableRowElement>("tbody tr")) {
    row.classList.toggle("brushed", keep.has(row.dataset.cfId ?? ""));
  }
}
