import { renderBoxplot } from "./boxplot";
import type { GroupByPayload, GroupRow, SegmentView } from "./types";

const STAT_KEYS = ["min", "q1", "median", "q3", "max"] as const;

/** Group-by panel: one row per inclusion pattern of the selected segments,
 *  with member count, outcome distribution, and logically forced segments. */
export function renderGroups(
  doc: Document,
  payload: GroupByPayload,
  segments: SegmentView[] = [],
): HTMLTableElement {
  const labels = new Map(segments.map((s) => [s.id, s.label]));
  const table = doc.createElement("table");
  table.className = "groups";

  const head = table.createTHead().insertRow();
  for (const sid of payload.selection) {
    const th = doc.createElement("th");
    th.textContent = labels.get(sid) ?? `segment ${sid}`;
    head.appendChild(th);
  }
  for (const name of ["n", "distribution", ...STAT_KEYS, "forces"]) {
    const th = doc.createElement("th");
    th.textContent = name;
    head.appendChild(th);
  }

  const body = table.createTBody();
  payload.groups.forEach((group: GroupRow, index: number) => {
    const tr = body.insertRow();
    tr.className = "group-row";
    tr.dataset.group = String(index);

    for (const state of group.pattern) {
      const cell = tr.insertCell();
      cell.className = state === "Included" ? "pattern-in" : "pattern-out";
      cell.textContent = state === "Included" ? "●" : "○";
    }

    const count = tr.insertCell();
    count.className = "member-count";
    count.textContent = String(group.member_cf_ids.length);

    tr.insertCell().appendChild(renderBoxplot(doc, group.stats));

    for (const key of STAT_KEYS) {
      const cell = tr.insertCell();
      cell.className = `stat stat-${key}`;
      cell.dataset.value = String(group.stats[key]);
      cell.textContent = group.stats[key].toFixed(2);
    }

    const forces = tr.insertCell();
    forces.className = "influenced";
    forces.textContent = group.influenced_segments
      .map((sid) => labels.get(sid) ?? String(sid))
      .join(", ");
  });
  return table;
}
