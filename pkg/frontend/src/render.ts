import type {
  BeliefSummary,
  HeatMapPayload,
  TracePayload,
  UtteranceReply,
} from "./types.js";

/**
 * Map an attention weight in [0,1] to a background color whose intensity
 * is strictly increasing in the weight (order-preserving by construction:
 * the lightness channel is an affine function of alpha).
 */
export function heatColor(alpha: number): string {
  const a = Math.max(0, Math.min(1, alpha));
  const lightness = 96 - 58 * a;
  return `hsl(210, 75%, ${lightness.toFixed(2)}%)`;
}

/** Lightness value parsed back out of heatColor, for ordering checks. */
export function heatIntensity(color: string): number {
  const match = /([0-9.]+)%\)$/.exec(color);
  return match ? 100 - parseFloat(match[1]) : NaN;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function chatBubble(role: "user" | "system", text: string): HTMLElement {
  const wrap = el("div", `bubble ${role}`);
  wrap.appendChild(el("div", "who", role === "user" ? "you" : "system"));
  wrap.appendChild(el("div", "text", text));
  return wrap;
}

export function beliefTable(summary: BeliefSummary): HTMLElement {
  const table = el("table", "belief");
  const head = el("tr");
  for (const h of ["slot", "value mass", "dontcare", "not mentioned"]) {
    head.appendChild(el("th", undefined, h));
  }
  table.appendChild(head);
  for (const [slot, row] of Object.entries(summary.informable)) {
    const tr = el("tr");
    tr.appendChild(el("td", "slot", slot));
    for (const v of [row.values, row.dontcare, row.none]) {
      tr.appendChild(el("td", "num", v.toFixed(2)));
    }
    table.appendChild(tr);
  }
  const reqRow = el("tr", "requestables");
  const cell = el("td");
  cell.colSpan = 4;
  const asked = Object.entries(summary.requestable)
    .filter(([, p]) => p >= 0.5)
    .map(([slot]) => slot);
  cell.textContent = asked.length
    ? `requested now: ${asked.join(", ")}`
    : "no open requests";
  reqRow.appendChild(cell);
  table.appendChild(reqRow);
  return table;
}

/**
 * Attention grid: one row per generated token, one column per tracker,
 * cell color monotone in the attention weight.
 */
export function heatmapGrid(payload: HeatMapPayload): HTMLElement {
  const table = el("table", "heatmap");
  const head = el("tr");
  head.appendChild(el("th"));
  for (const tracker of payload.trackers) {
    head.appendChild(el("th", "tracker", tracker.replace("req.", "?")));
  }
  table.appendChild(head);
  payload.rows.forEach((row, i) => {
    const tr = el("tr", "heat-row");
    tr.appendChild(el("th", "token", payload.tokens[i] ?? ""));
    for (const alpha of row) {
      const td = el("td", "cell");
      td.style.backgroundColor = heatColor(alpha);
      td.title = alpha.toFixed(3);
      tr.appendChild(td);
    }
    table.appendChild(tr);
  });
  return table;
}

export function absenceNotice(what: string): HTMLElement {
  return el("div", "absence", `${what} not available for this architecture`);
}

const TRACE_COLORS = [
  "#e41a1c", "#377eb8", "#4daf4a", "#984ea3",
  "#ff7f00", "#a65628", "#f781bf", "#17becf",
];

/**
 * Snapshot-neuron chart: one SVG polyline per indicator over the
 * generation steps, x axis labeled with the emitted tokens, y in [0,1].
 */
export function neuronChart(payload: TracePayload): SVGSVGElement {
  const width = Math.max(260, 46 * payload.tokens.length + 60);
  const height = 170;
  const left = 30;
  const top = 10;
  const plotH = 110;
  const svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
  svg.setAttribute("class", "trace");
  svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
  svg.setAttribute("width", String(width));

  const xAt = (step: number) =>
    payload.tokens.length === 1
      ? left + 20
      : left + (step * (width - left - 20)) / (payload.tokens.length - 1);
  const yAt = (v: number) => top + (1 - v) * plotH;

  for (const gridVal of [0, 0.5, 1]) {
    const line = document.createElementNS("http://www.w3.org/2000/svg", "line");
    line.setAttribute("x1", String(left));
    line.setAttribute("x2", String(width - 10));
    line.setAttribute("y1", String(yAt(gridVal)));
    line.setAttribute("y2", String(yAt(gridVal)));
    line.setAttribute("class", "grid");
    svg.appendChild(line);
  }

  payload.indicators.forEach((indicator, k) => {
    const points = payload.values
      .map((row, step) => `${xAt(step)},${yAt(row[k])}`)
      .join(" ");
    const poly = document.createElementNS(
      "http://www.w3.org/2000/svg",
      "polyline",
    );
    poly.setAttribute("points", points);
    poly.setAttribute("fill", "none");
    poly.setAttribute("stroke", TRACE_COLORS[k % TRACE_COLORS.length]);
    poly.setAttribute("stroke-width", "1.6");
    poly.setAttribute("data-indicator", indicator);
    svg.appendChild(poly);
  });

  payload.tokens.forEach((token, step) => {
    const label = document.createElementNS("http://www.w3.org/2000/svg", "text");
    label.setAttribute("x", String(xAt(step)));
    label.setAttribute("y", String(top + plotH + 14));
    label.setAttribute("class", "token-label");
    label.setAttribute("transform",
      `rotate(35 ${xAt(step)} ${top + plotH + 14})`);
    label.textContent = token;
    svg.appendChild(label);
  });
  return svg;
}

export function traceLegend(indicators: string[]): HTMLElement {
  const wrap = el("div", "legend");
  indicators.forEach((indicator, k) => {
    const item = el("span", "legend-item", indicator);
    item.style.borderLeftColor = TRACE_COLORS[k % TRACE_COLORS.length];
    wrap.appendChild(item);
  });
  return wrap;
}

/** The full inspector panel shown next to one system turn. */
export function inspectorPanel(reply: UtteranceReply): HTMLElement {
  const panel = el("div", "inspector");

  const badges = el("div", "badges");
  badges.appendChild(
    el("span", "badge", `db matches: ${reply.dbMatchCount} (bin ${reply.dbMatchBin})`),
  );
  if (reply.offeredEntity) {
    badges.appendChild(el("span", "badge offered", `offered: ${reply.offeredEntity}`));
  }
  panel.appendChild(badges);

  panel.appendChild(el("h4", undefined, "belief summary"));
  panel.appendChild(beliefTable(reply.beliefSummary));

  panel.appendChild(el("h4", undefined, "attention over trackers"));
  if (reply.attentionHeatMap) {
    panel.appendChild(heatmapGrid(reply.attentionHeatMap));
  } else {
    panel.appendChild(absenceNotice("attention heat map"));
  }

  panel.appendChild(el("h4", undefined, "snapshot neurons"));
  if (reply.snapshotTrace) {
    panel.appendChild(neuronChart(reply.snapshotTrace));
    panel.appendChild(traceLegend(reply.snapshotTrace.indicators));
  } else {
    panel.appendChild(absenceNotice("snapshot trace"));
  }
  return panel;
}
