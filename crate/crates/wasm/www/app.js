import init, { samplePaths, compare, chance } from "./pkg/episde_wasm.js";

const $ = (id) => document.getElementById(id);
const status = (text) => { $("status").textContent = text; };
const COLORS = ["#1f6feb", "#d9480f"];

function model() {
  return {
    benchmark: $("benchmark").value,
    theta: Number($("theta").value),
    paths: Number($("paths").value),
    horizon: Number($("horizon").value),
    steps: Number($("steps").value),
    seed: Number($("seed").value) >>> 0,
  };
}

function fmt(x, digits = 4) {
  if (x === null || x === undefined) return "–";
  if (typeof x === "number") return Math.abs(x) >= 1e4 || (x !== 0 && Math.abs(x) < 1e-3) ? x.toExponential(2) : x.toFixed(digits);
  return String(x);
}

// Runs `work` after the status text has been painted.
function timed(label, work) {
  status(`${label}…`);
  setTimeout(() => {
    const started = performance.now();
    try {
      work();
      status(`${label}: ${((performance.now() - started) / 1000).toFixed(2)} s`);
    } catch (e) {
      status(`${label} failed: ${e.message ?? e}`);
    }
  }, 20);
}

function drawPaths(view) {
  const canvas = $("plot");
  const ctx = canvas.getContext("2d");
  const W = canvas.width, H = canvas.height, pad = 40;
  ctx.clearRect(0, 0, W, H);

  const t = view.t;
  const finite = (v) => Number.isFinite(v);
  let lo = Infinity, hi = -Infinity;
  for (const s of view.semantics) {
    for (const [a, b] of s.empirical.concat(s.analytic ?? [])) {
      if (finite(a)) lo = Math.min(lo, a);
      if (finite(b)) hi = Math.max(hi, b);
    }
    for (const p of s.paths) for (const v of p) if (finite(v)) { lo = Math.min(lo, v); hi = Math.max(hi, v); }
  }
  if (!(hi > lo)) { lo -= 1; hi += 1; }
  const X = (x) => pad + (x - t[0]) / (t[t.length - 1] - t[0]) * (W - 2 * pad);
  const Y = (y) => H - pad - (y - lo) / (hi - lo) * (H - 2 * pad);

  ctx.strokeStyle = "#999";
  ctx.fillStyle = "#555";
  ctx.font = "12px system-ui";
  ctx.beginPath();
  ctx.moveTo(pad, pad); ctx.lineTo(pad, H - pad); ctx.lineTo(W - pad, H - pad);
  ctx.stroke();
  ctx.fillText(fmt(hi, 2), 2, pad + 4);
  ctx.fillText(fmt(lo, 2), 2, H - pad);
  ctx.fillText(`t = ${fmt(t[0], 1)}`, pad, H - pad + 16);
  ctx.fillText(`${fmt(t[t.length - 1], 1)}`, W - pad - 20, H - pad + 16);

  view.semantics.forEach((s, k) => {
    const color = COLORS[k];
    ctx.globalAlpha = 0.15;
    ctx.fillStyle = color;
    ctx.beginPath();
    s.empirical.forEach(([a], i) => (i ? ctx.lineTo : ctx.moveTo).call(ctx, X(t[i]), Y(a)));
    for (let i = t.length - 1; i >= 0; i--) ctx.lineTo(X(t[i]), Y(s.empirical[i][1]));
    ctx.closePath();
    ctx.fill();
    ctx.globalAlpha = 1;

    if (s.analytic) {
      ctx.setLineDash([6, 4]);
      ctx.strokeStyle = color;
      ctx.lineWidth = 1.5;
      for (const side of [0, 1]) {
        ctx.beginPath();
        s.analytic.forEach((band, i) => (i ? ctx.lineTo : ctx.moveTo).call(ctx, X(t[i]), Y(band[side])));
        ctx.stroke();
      }
      ctx.setLineDash([]);
    }

    ctx.strokeStyle = color;
    ctx.lineWidth = 1;
    ctx.globalAlpha = 0.8;
    for (const p of s.paths) {
      ctx.beginPath();
      let pen = false;
      p.forEach((v, i) => {
        if (!finite(v)) { pen = false; return; }
        (pen ? ctx.lineTo : ctx.moveTo).call(ctx, X(t[i]), Y(v));
        pen = true;
      });
      ctx.stroke();
    }
    ctx.globalAlpha = 1;
  });
}

function table(head, rows) {
  const th = head.map((h) => `<th>${h}</th>`).join("");
  const body = rows.map((r) => `<tr>${r.map((c) => `<td>${c}</td>`).join("")}</tr>`).join("");
  return `<table><thead><tr>${th}</tr></thead><tbody>${body}</tbody></table>`;
}

function runPaths() {
  const m = model();
  timed("simulating", () => {
    drawPaths(JSON.parse(samplePaths(m.benchmark, m.theta, m.paths, m.horizon, m.steps, m.seed, 7)));
  });
}

function runCompare() {
  const m = model();
  timed("comparing", () => {
    const report = JSON.parse(compare(m.benchmark, m.theta, m.paths, m.horizon, m.steps, m.seed));
    $("compare").innerHTML = table(
      ["discriminator", "parametric", "SDE", "expected", "evidence", ""],
      report.rows.map((r) => [
        r.name,
        fmt(r.epistemic),
        fmt(r.aleatoric),
        r.expected ? `${fmt(r.expected[0])} / ${fmt(r.expected[1])}` : "–",
        r.evidence,
        r.pass ? '<span class="pass">pass</span>' : '<span class="fail">fail</span>',
      ]),
    );
  });
}

function runChance() {
  const m = model();
  const lo = Number($("lo").value), hi = Number($("hi").value), delta = Number($("delta").value);
  timed("estimating", () => {
    const r = JSON.parse(chance(m.benchmark, m.theta, m.paths, m.horizon, m.steps, m.seed, lo, hi, delta));
    const rows = [["parametric", r.epistemic], ["SDE", r.aleatoric]].map(([name, o]) => {
      const c = o.chance;
      const s = o.stability;
      const verdict = c.verdict === "Satisfied" ? "pass" : c.verdict === "Violated" ? "fail" : "";
      return [
        name,
        fmt(c.point_estimate),
        `[${fmt(c.confidence_interval[0])}, ${fmt(c.confidence_interval[1])}]`,
        fmt(1 - c.delta, 3),
        `<span class="${verdict}">${c.verdict}</span>`,
        s ? fmt(s.fraction_diverging) : "–",
      ];
    });
    $("chance").innerHTML = table(["semantics", "P(safe)", "95% CI", "target 1−δ", "verdict", "diverging"], rows);
  });
}

await init();
$("run-paths").addEventListener("click", runPaths);
$("run-compare").addEventListener("click", runCompare);
$("run-chance").addEventListener("click", runChance);
status("ready");
runPaths();
