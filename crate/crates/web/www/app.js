import init, { analyzeTables, tailCurves, ppCurves } from "./pkg/qhet_web.js";

const COLORS = {
  chisq: "#555",
  "2m_naive": "#d62728",
  "2m_model": "#ff9896",
  f_naive: "#1f77b4",
  f_model: "#9ecae1",
};

const $ = (id) => document.getElementById(id);

function legend(el, methods) {
  el.innerHTML = methods
    .map((m) => `<span><i style="background:${COLORS[m]}"></i>${m}</span>`)
    .join("");
}

// series: [{method, xs, ys}]; marks: vertical lines at x
function plot(canvas, series, { xlabel, ylabel, ymin, ymax, logx = false, marks = [], zero = false }) {
  const ctx = canvas.getContext("2d");
  const W = canvas.width, H = canvas.height, L = 48, R = 10, T = 10, B = 34;
  ctx.clearRect(0, 0, W, H);
  const xs = series.flatMap((s) => s.xs);
  const tx = logx ? Math.log10 : (x) => x;
  let x0 = Math.min(...xs.map(tx)), x1 = Math.max(...xs.map(tx));
  if (x1 === x0) x1 = x0 + 1;
  const X = (x) => L + ((tx(x) - x0) / (x1 - x0)) * (W - L - R);
  const Y = (y) => T + (1 - (y - ymin) / (ymax - ymin)) * (H - T - B);

  ctx.strokeStyle = "#999";
  ctx.lineWidth = 1;
  ctx.strokeRect(L, T, W - L - R, H - T - B);
  ctx.fillStyle = "#444";
  ctx.font = "11px sans-serif";
  for (let i = 0; i <= 4; i++) {
    const y = ymin + ((ymax - ymin) * i) / 4;
    ctx.fillText(y.toFixed(3), 4, Y(y) + 4);
  }
  for (let i = 0; i <= 4; i++) {
    const v = x0 + ((x1 - x0) * i) / 4;
    const label = logx ? (10 ** v).toPrecision(2) : v.toPrecision(3);
    ctx.fillText(label, L + ((W - L - R) * i) / 4 - 10, H - B + 14);
  }
  ctx.fillText(xlabel, W / 2 - 20, H - 4);
  ctx.save();
  ctx.translate(12, H / 2);
  ctx.rotate(-Math.PI / 2);
  ctx.fillText(ylabel, -20, 0);
  ctx.restore();

  if (zero) {
    ctx.strokeStyle = "#bbb";
    ctx.beginPath();
    ctx.moveTo(L, Y(0));
    ctx.lineTo(W - R, Y(0));
    ctx.stroke();
  }
  for (const m of marks) {
    ctx.strokeStyle = "#2ca02c";
    ctx.setLineDash([4, 3]);
    ctx.beginPath();
    ctx.moveTo(X(m), T);
    ctx.lineTo(X(m), H - B);
    ctx.stroke();
    ctx.setLineDash([]);
  }
  for (const s of series) {
    ctx.strokeStyle = COLORS[s.method] || "#000";
    ctx.lineWidth = 2;
    ctx.beginPath();
    s.xs.forEach((x, i) => {
      const y = Math.min(ymax, Math.max(ymin, s.ys[i]));
      i ? ctx.lineTo(X(x), Y(y)) : ctx.moveTo(X(x), Y(y));
    });
    ctx.stroke();
  }
}

function fmt(x) {
  return x === null || x === undefined ? "n/a" : Number(x).toPrecision(4);
}

function runAnalyze() {
  const text = $("tables").value, measure = $("measure").value;
  try {
    const a = JSON.parse(analyzeTables(text, measure));
    const rows = a.p_values.map((p) => `<tr><td>${p.name}</td><td>${fmt(p.p_value)}</td></tr>`).join("");
    $("analysis").innerHTML =
      `<p>K = ${a.k}; Q<sub>IV</sub> = ${fmt(a.q_iv)} (${a.k_iv} studies); ` +
      `Q<sub>F</sub> = ${fmt(a.q_f)}; pooled effect ${fmt(a.weighted_mean_f)}</p>` +
      `<table><tr><th>approximation</th><th>p-value</th></tr>${rows}</table>`;

    const c = JSON.parse(tailCurves(text, measure, 200));
    const iv = c.chisq ? [{ method: "chisq", xs: c.grid_iv, ys: c.chisq }] : [];
    plot($("tail-iv"), iv.length ? iv : [{ method: "chisq", xs: [0, 1], ys: [NaN, NaN] }], {
      xlabel: "Q_IV", ylabel: "P(Q > q)", ymin: 0, ymax: 1, marks: c.q_iv === null ? [] : [c.q_iv],
    });
    plot($("tail-f"), c.curves_f.map((s) => ({ method: s.method, xs: c.grid_f, ys: s.sf })), {
      xlabel: "Q_F", ylabel: "P(Q > q)", ymin: 0, ymax: 1, marks: [c.q_f],
    });
    legend($("tail-legend"), ["chisq", ...c.curves_f.map((s) => s.method)]);
  } catch (e) {
    $("analysis").innerHTML = `<p class="err">${e.message || e}</p>`;
  }
}

function runSim() {
  const num = (id) => Number($(id).value);
  $("sim-info").textContent = "running...";
  // let the message paint before the synchronous run
  setTimeout(() => {
    try {
      const t0 = performance.now();
      const r = JSON.parse(
        ppCurves($("sim-measure").value, num("sim-k"), num("sim-n"), num("sim-pc"),
          num("sim-effect"), num("sim-tau2"), num("sim-reps"), BigInt(num("sim-seed"))),
      );
      const ms = performance.now() - t0;
      $("sim-info").textContent =
        `${r.reps} replications, ${r.analyzed} analyzed, ${r.discarded} discarded (${(ms / 1000).toFixed(1)} s)`;
      const ys = r.errors.flatMap((e) => e.sf);
      const span = Math.max(0.01, ...ys.map(Math.abs));
      plot($("pp"), r.errors.map((e) => ({ method: e.method, xs: r.nominal, ys: e.sf })), {
        xlabel: "nominal p", ylabel: "achieved - nominal", ymin: -span, ymax: span, logx: true, zero: true,
      });
      legend($("pp-legend"), r.errors.map((e) => e.method));
    } catch (e) {
      $("sim-info").innerHTML = `<span class="err">${e.message || e}</span>`;
    }
  }, 20);
}

await init();
$("run-analyze").onclick = runAnalyze;
$("run-sim").onclick = runSim;
runAnalyze();
