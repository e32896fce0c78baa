import init, { gaussianGeneration, sigmaLadder, ToyModel } from "./pkg/gmsdi_demo.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function key(id, names) {
  $(id).innerHTML = names
    .map((n, i) => `<span><i style="background:${COLORS[i % COLORS.length]}"></i>${n}</span>`)
    .join("");
}

// Draws each series as a polyline over a shared y range.
function lines(canvas, series, { logY = false, yLabel = "" } = {}) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  const f = logY ? (v) => Math.log10(Math.max(v, 1e-12)) : (v) => v;
  const all = series.flatMap((s) => s.map(f));
  let lo = Math.min(...all), hi = Math.max(...all);
  if (hi === lo) hi = lo + 1;
  const pad = 20;
  series.forEach((s, k) => {
    ctx.strokeStyle = COLORS[k % COLORS.length];
    ctx.beginPath();
    s.forEach((v, i) => {
      const x = pad + (i / Math.max(s.length - 1, 1)) * (w - 2 * pad);
      const y = h - pad - ((f(v) - lo) / (hi - lo)) * (h - 2 * pad);
      i ? ctx.lineTo(x, y) : ctx.moveTo(x, y);
    });
    ctx.stroke();
  });
  ctx.fillStyle = "#555";
  ctx.fillText(`${yLabel} ${logY ? "10^" : ""}${hi.toFixed(2)}`, 2, 12);
  ctx.fillText(`${logY ? "10^" : ""}${lo.toFixed(2)}`, 2, h - 4);
}

function generate() {
  const g = JSON.parse(gaussianGeneration(
    num("g-mu1"), num("g-v1"), num("g-mu2"), num("g-v2"),
    num("g-c"), num("g-steps"), num("g-runs"), num("g-seed")));
  const hists = [...g.sources, g.mixture, g.sum];
  lines($("g-plot"), hists.map((h) => h.counts));
  key("g-key", ["source 1", "source 2", "mixture", "sum of sources"]);
  const row = (n, h) => `${n.padEnd(16)} mean ${h.mean.toFixed(3).padStart(7)}  var ${h.var.toFixed(3)}`;
  $("g-out").textContent = [
    row("source 1", g.sources[0]), row("source 2", g.sources[1]),
    row("mixture", g.mixture), row("sum of sources", g.sum),
    `x range [${g.mixture.lo.toFixed(2)}, ${g.mixture.hi.toFixed(2)}]; mixture residual ${(100 * g.residual).toFixed(2)}%`,
  ].join("\n");
}

let model = null;

function train() {
  $("s-status").textContent = "training...";
  setTimeout(() => {
    const t0 = performance.now();
    model?.free();
    model = new ToyModel(num("s-clips"), num("s-epochs"), 0);
    $("s-status").textContent = `trained in ${((performance.now() - t0) / 1000).toFixed(1)} s`;
    $("s-run").disabled = false;
  }, 10);
}

function separate() {
  const s = JSON.parse(model.separate($("s-a").value, $("s-b").value, num("s-seed"), num("s-steps"), num("s-w")));
  lines($("s-plot"), [s.mixture, s.stems[0], s.estimates[0], s.estimates[1]]);
  key("s-key", ["mixture", `${s.labels[0]} reference`, `${s.labels[0]} estimate`, `${s.labels[1]} estimate (residual)`]);
  $("s-out").textContent = s.labels
    .map((l, i) => `${l.padEnd(8)} SI-SDRi ${s.si_sdri[i].toFixed(2).padStart(7)} dB   band-pass oracle ${s.oracle_si_sdri[i].toFixed(2)} dB`)
    .join("\n");
}

function schedule() {
  try {
    const l = JSON.parse(sigmaLadder(num("l-min"), num("l-max"), num("l-rho"), num("l-steps")));
    lines($("l-plot"), [l.sigmas.slice(0, -1), l.down, l.up], { logY: true, yLabel: "σ" });
    key("l-key", ["σ_i", "σ_down", "σ_up"]);
  } catch (e) {
    $("l-key").textContent = String(e);
  }
}

function guard(f, out) {
  return () => {
    try { f(); } catch (e) { $(out).textContent = String(e); }
  };
}

await init();
$("g-run").onclick = guard(generate, "g-out");
$("s-train").onclick = guard(train, "s-out");
$("s-run").onclick = guard(separate, "s-out");
for (const id of ["l-min", "l-max", "l-rho", "l-steps"]) $(id).oninput = schedule;
generate();
schedule();
