import init, { damping_sweep, sv_spectrum, alert_curves } from "./pkg/modalkl_demo.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

function num(id) {
  return Number(document.getElementById(id).value);
}

// Line plot of several series on shared axes. Each series: {x, y, color, dash, width, label}.
function plot(canvasId, series, opts = {}) {
  const c = document.getElementById(canvasId);
  const g = c.getContext("2d");
  const pad = { l: 56, r: 12, t: 14, b: 36 };
  const w = c.width - pad.l - pad.r;
  const h = c.height - pad.t - pad.b;
  g.clearRect(0, 0, c.width, c.height);

  const xs = series.flatMap((s) => s.x).filter(Number.isFinite);
  const ys = series.flatMap((s) => s.y).filter(Number.isFinite);
  const x0 = opts.xmin ?? Math.min(...xs);
  const x1 = opts.xmax ?? Math.max(...xs);
  let y0 = opts.ymin ?? Math.min(...ys);
  let y1 = opts.ymax ?? Math.max(...ys);
  if (y1 === y0) { y1 += 1; y0 -= 1; }
  const px = (x) => pad.l + ((x - x0) / (x1 - x0 || 1)) * w;
  const py = (y) => pad.t + h - ((y - y0) / (y1 - y0)) * h;

  g.strokeStyle = "#999";
  g.strokeRect(pad.l, pad.t, w, h);
  g.fillStyle = "#333";
  g.font = "11px system-ui";
  for (let i = 0; i <= 4; i++) {
    const yv = y0 + ((y1 - y0) * i) / 4;
    const xv = x0 + ((x1 - x0) * i) / 4;
    g.fillText(yv.toPrecision(3), 4, py(yv) + 4);
    g.fillText(xv.toPrecision(3), px(xv) - 12, pad.t + h + 14);
  }
  if (opts.xlabel) g.fillText(opts.xlabel, pad.l + w / 2 - 30, c.height - 4);

  for (const v of opts.vlines ?? []) {
    g.strokeStyle = "#bbb";
    g.setLineDash([4, 4]);
    g.beginPath();
    g.moveTo(px(v), pad.t);
    g.lineTo(px(v), pad.t + h);
    g.stroke();
  }
  g.setLineDash([]);

  let legendY = pad.t + 14;
  for (const s of series) {
    g.strokeStyle = s.color;
    g.lineWidth = s.width ?? 1.5;
    g.setLineDash(s.dash ?? []);
    g.beginPath();
    let started = false;
    s.x.forEach((xv, i) => {
      const yv = s.y[i];
      if (!Number.isFinite(yv)) return;
      if (started) g.lineTo(px(xv), py(yv));
      else { g.moveTo(px(xv), py(yv)); started = true; }
    });
    g.stroke();
    if (s.markers) {
      g.fillStyle = s.color;
      s.x.forEach((xv, i) => g.fillRect(px(xv) - 3, py(s.y[i]) - 3, 6, 6));
    }
    if (s.label) {
      g.setLineDash([]);
      g.fillStyle = s.color;
      g.fillText(s.label, pad.l + w - 150, legendY);
      legendY += 14;
    }
  }
  g.setLineDash([]);
  g.lineWidth = 1;
}

// Rescales a curve to [0, 1] so divergences with different units share an axis.
function unit(v) {
  const lo = Math.min(...v);
  const hi = Math.max(...v);
  return v.map((x) => (hi > lo ? (x - lo) / (hi - lo) : 0));
}

function runSweep() {
  const r = JSON.parse(damping_sweep(num("sw-true"), num("sw-noise"), num("sw-prior"), num("sw-seed")));
  const f = r.factors;
  plot("sw-div", [
    { x: f, y: unit(r.kl), color: COLORS[0], markers: true, label: "KL (normalized)" },
    { x: f, y: unit(r.jensen_shannon), color: COLORS[1], dash: [5, 3], markers: true, label: "Jensen-Shannon" },
    { x: f, y: unit(r.renyi), color: COLORS[2], dash: [2, 3], markers: true, label: "Renyi entropy" },
  ], { xlabel: "damping scale factor", ymin: 0, ymax: 1 });

  const t = r.measured.map((_, i) => i / r.sample_rate_hz);
  const sel = r.selected_index;
  plot("sw-time", [
    { x: t, y: r.measured, color: "#888", width: 1, label: "measured" },
    { x: t, y: r.candidates[0], color: COLORS[3], dash: [4, 3], label: `factor ${f[0]}` },
    { x: t, y: r.candidates[f.length - 1], color: COLORS[4], dash: [4, 3], label: `factor ${f[f.length - 1]}` },
    { x: t, y: r.candidates[sel], color: COLORS[0], width: 2, label: `selected ${f[sel]}` },
  ], { xlabel: "time (s)" });

  const rows = f.map((v, i) => `${v}: KL ${r.kl[i].toFixed(3)}`).join(", ");
  document.getElementById("sw-out").textContent = `selected factor ${f[sel]} (${rows})`;
}

function runSpectrum() {
  const r = JSON.parse(sv_spectrum(num("sv-damp"), num("sv-noise"), num("sv-seed")));
  const series = r.sv_db.map((y, k) => ({
    x: r.frequencies_hz, y, color: COLORS[k % COLORS.length], width: k === 0 ? 2 : 1, label: `SV${k + 1}`,
  }));
  series.push({
    x: r.peaks_hz,
    y: r.peaks_hz.map((p) => {
      const i = r.frequencies_hz.findIndex((f) => Math.abs(f - p) < 1e-9);
      return r.sv_db[0][i];
    }),
    color: "#000", width: 0, markers: true, label: "picked peaks",
  });
  plot("sv-plot", series, { xlabel: "frequency (Hz)", vlines: r.exact_hz, xmax: 20 });
  const rows = r.peaks_hz.map((p, i) => `${p.toFixed(2)} Hz, zeta ${(100 * r.peak_damping[i]).toFixed(2)} %`);
  const exact = r.exact_hz.map((p, i) => `${p.toFixed(2)} Hz, zeta ${(100 * r.exact_damping[i]).toFixed(2)} %`);
  document.getElementById("sv-out").textContent = `picked: ${rows.join("; ")}. exact: ${exact.join("; ")}.`;
}

function runAlerts() {
  const r = JSON.parse(alert_curves(num("al-true"), num("al-cand"), num("al-noise"), num("al-seed")));
  plot("al-plot", [
    { x: r.thresholds, y: r.measured_s, color: "#555", label: "measured" },
    { x: r.thresholds, y: r.model_s, color: COLORS[0], dash: [5, 3], label: "candidate" },
  ], { xlabel: "threshold (m/s²)", ymin: 0 });
  document.getElementById("al-out").textContent = `duration discrepancy ${r.duration_discrepancy.toExponential(3)}`;
}

function guarded(fn) {
  return () => {
    const status = document.getElementById("status");
    try {
      status.textContent = "";
      fn();
    } catch (e) {
      status.textContent = String(e.message ?? e);
    }
  };
}

await init();
for (const [id, fn] of [["sw-run", runSweep], ["sv-run", runSpectrum], ["al-run", runAlerts]]) {
  const run = guarded(fn);
  document.getElementById(id).addEventListener("click", run);
  run();
}
