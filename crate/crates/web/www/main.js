import init, { fitSummary, linkCurve, traceRegions } from "./pkg/multilink_web.js";

const SVG = "http://www.w3.org/2000/svg";
const COLOURS = { conservative: "#1b9e77", lr: "#d95f02", score: "#7570b3" };
const LABELS = { conservative: "conservative", lr: "likelihood ratio", score: "score" };

const $ = (id) => document.getElementById(id);

function el(name, attrs, text) {
  const node = document.createElementNS(SVG, name);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text !== undefined) node.textContent = text;
  return node;
}

// Linear map from data coordinates to a plot box.
function scales(box, xr, yr) {
  return {
    x: (v) => box.left + ((v - xr[0]) / (xr[1] - xr[0])) * (box.right - box.left),
    y: (v) => box.bottom - ((v - yr[0]) / (yr[1] - yr[0])) * (box.bottom - box.top),
  };
}

function axes(svg, box, xr, yr, xlabel, ylabel) {
  svg.append(el("rect", { x: box.left, y: box.top, width: box.right - box.left, height: box.bottom - box.top, fill: "none", stroke: "#000" }));
  const s = scales(box, xr, yr);
  for (let i = 0; i <= 4; i++) {
    const vx = xr[0] + (i / 4) * (xr[1] - xr[0]);
    const vy = yr[0] + (i / 4) * (yr[1] - yr[0]);
    svg.append(el("text", { x: s.x(vx), y: box.bottom + 16, "text-anchor": "middle", "font-size": 11 }, vx.toFixed(2)));
    svg.append(el("text", { x: box.left - 6, y: s.y(vy) + 4, "text-anchor": "end", "font-size": 11 }, vy.toFixed(2)));
  }
  svg.append(el("text", { x: (box.left + box.right) / 2, y: box.bottom + 34, "text-anchor": "middle" }, xlabel));
  svg.append(el("text", { x: 14, y: (box.top + box.bottom) / 2, "text-anchor": "middle", transform: `rotate(-90 14 ${(box.top + box.bottom) / 2})` }, ylabel));
  return s;
}

function drawCurve() {
  const au = Number($("alpha-upper").value);
  const al = Number($("alpha-lower").value);
  $("alpha-upper-value").textContent = au.toFixed(2);
  $("alpha-lower-value").textContent = al.toFixed(2);
  const n = 121;
  const range = [-4, 4];
  const values = linkCurve(au, al, range[0], range[1], n);
  const svg = $("curve-plot");
  svg.replaceChildren();
  const box = { left: 50, right: 470, top: 10, bottom: 280 };
  const s = axes(svg, box, range, [-8, 8], "eta", "G(alpha, eta)");
  const identity = `${s.x(-4)},${s.y(-4)} ${s.x(4)},${s.y(4)}`;
  svg.append(el("polyline", { points: identity, fill: "none", stroke: "#aaa", "stroke-dasharray": "4 3" }));
  const pts = [];
  values.forEach((g, i) => {
    const eta = range[0] + (i / (n - 1)) * (range[1] - range[0]);
    const clipped = Math.max(-8, Math.min(8, g));
    if (Number.isFinite(g)) pts.push(`${s.x(eta).toFixed(1)},${s.y(clipped).toFixed(1)}`);
  });
  svg.append(el("polyline", { points: pts.join(" "), fill: "none", stroke: "#d95f02", "stroke-width": 2 }));
}

function fmt(v) {
  return v === null || v === undefined ? "-" : Number(v).toPrecision(6);
}

function runFit() {
  const mask = `${+$("a11").checked},${+$("a12").checked};${+$("a21").checked},${+$("a22").checked}`;
  const out = $("fit-output");
  try {
    const s = JSON.parse(fitSummary($("standardization").value, mask));
    const rows = s.parameters
      .map((p) => `<tr><td>${p.name}</td><td>${fmt(p.estimate)}</td><td>${fmt(p.se)}</td><td>${fmt(p.se_alpha_fixed)}</td><td>${fmt(p.inflation)}</td></tr>`)
      .join("");
    const status = s.converged ? `converged in ${s.iterations} iterations` : `<span class="error">not converged after ${s.iterations} iterations</span>`;
    out.innerHTML = `<p>deviance ${fmt(s.deviance)}, AIC ${fmt(s.aic)}, ${status}</p>
      <table><tr><th>parameter</th><th>estimate</th><th>se</th><th>se (&alpha; fixed)</th><th>inflation</th></tr>${rows}</table>`;
  } catch (e) {
    out.innerHTML = `<p class="error">${e}</p>`;
  }
}

// Closed outline of each run of non-empty columns.
function outlines(columns) {
  const runs = [];
  let run = [];
  for (const c of columns) {
    if (c.bounds) run.push([c.x1, c.bounds[0], c.bounds[1]]);
    else if (run.length) { runs.push(run); run = []; }
  }
  if (run.length) runs.push(run);
  return runs.map((r) => {
    const pts = r.map(([x, lo]) => [x, lo]).concat(r.slice().reverse().map(([x, , hi]) => [x, hi]));
    pts.push(pts[0]);
    return pts;
  });
}

function runRegions() {
  const status = $("regions-status");
  status.textContent = "tracing...";
  // Let the status text paint before the synchronous trace starts.
  setTimeout(() => {
    const started = performance.now();
    try {
      const s = JSON.parse(traceRegions(Number($("pi1").value), Number($("pi2").value), Number($("tau").value), Number($("n1").value), Number($("n2").value)));
      const svg = $("regions-plot");
      svg.replaceChildren();
      const box = { left: 60, right: 480, top: 15, bottom: 430 };
      const sc = axes(svg, box, s.window[0], s.window[1], "x1", "x2");
      let ly = 30;
      for (const r of s.regions) {
        for (const o of outlines(r.columns)) {
          const pts = o.map(([a, b]) => `${sc.x(a).toFixed(1)},${sc.y(b).toFixed(1)}`).join(" ");
          svg.append(el("polyline", { points: pts, fill: "none", stroke: COLOURS[r.method], "stroke-width": 2 }));
        }
        svg.append(el("line", { x1: 495, y1: ly, x2: 520, y2: ly, stroke: COLOURS[r.method], "stroke-width": 2 }));
        svg.append(el("text", { x: 526, y: ly + 4, "font-size": 12 }, LABELS[r.method]));
        ly += 20;
      }
      if (s.x0) {
        const [x, y] = [sc.x(s.x0[0]), sc.y(s.x0[1])];
        svg.append(el("path", { d: `M${x - 5},${y - 5}L${x + 5},${y + 5}M${x - 5},${y + 5}L${x + 5},${y - 5}`, stroke: "#000", "stroke-width": 2 }));
      }
      const x0 = s.x0 ? `x0 = (${s.x0.map((v) => v.toFixed(4)).join(", ")})` : "no unique estimate";
      const failures = s.failures.length ? ` Failed: ${s.failures.join("; ")}` : "";
      status.textContent = `${x0}; traced in ${((performance.now() - started) / 1000).toFixed(1)} s.${failures}`;
    } catch (e) {
      status.innerHTML = `<span class="error">${e}</span>`;
    }
  }, 10);
}

await init();
$("alpha-upper").addEventListener("input", drawCurve);
$("alpha-lower").addEventListener("input", drawCurve);
$("fit-run").addEventListener("click", runFit);
$("regions-run").addEventListener("click", runRegions);
drawCurve();
runFit();
