import init, { restrictedUpdate, elboCurves, topkSweep } from "./pkg/esvi_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const list = (id) => $(id).value.split(",").map((s) => Number(s.trim())).filter((x) => !Number.isNaN(x));

function guard(out, f) {
  try {
    f();
  } catch (e) {
    out.textContent = String(e);
  }
}

function solve() {
  guard($("ru-out"), () => {
    const r = restrictedUpdate(new Float64Array(list("ru-u")), num("ru-c"));
    const z = Array.from(r.slice(0, -1), (x) => x.toFixed(6));
    $("ru-out").textContent = `z = [${z.join(", ")}]\nobjective = ${r[r.length - 1].toFixed(6)}`;
  });
}

function plot(canvas, xs, series) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 50;
  ctx.clearRect(0, 0, w, h);
  const ys = series.flatMap((s) => s.values);
  const [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  const [y0, y1] = [Math.min(...ys), Math.max(...ys)];
  const sx = (x) => pad + ((x - x0) / (x1 - x0 || 1)) * (w - 2 * pad);
  const sy = (y) => h - pad + ((y0 - y) / (y1 - y0 || 1)) * (h - 2 * pad);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#555";
  ctx.fillText(y1.toExponential(4), 2, pad);
  ctx.fillText(y0.toExponential(4), 2, h - pad);
  ctx.fillText(`${x1} updates`, w - pad - 60, h - pad + 20);
  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.beginPath();
    s.values.forEach((y, i) => (i ? ctx.lineTo(sx(xs[i]), sy(y)) : ctx.moveTo(sx(xs[i]), sy(y))));
    ctx.stroke();
  }
}

function curves() {
  guard($("status"), () => {
    const flat = elboCurves(num("ec-docs"), num("ec-topics"), num("ec-epochs"), num("ec-seed"));
    const xs = [], vi = [], esvi = [];
    for (let i = 0; i < flat.length; i += 3) {
      xs.push(flat[i]);
      vi.push(flat[i + 1]);
      esvi.push(flat[i + 2]);
    }
    // Skip the shared starting point so the interesting range fills the plot.
    plot($("ec-plot"), xs.slice(1), [
      { values: vi.slice(1), color: "#c0392b" },
      { values: esvi.slice(1), color: "#2471a3" },
    ]);
  });
}

function sweep() {
  guard($("tk-out"), () => {
    const cutoffs = list("tk-cutoffs");
    const elbo = topkSweep(50, num("tk-topics"), new Uint32Array(cutoffs), num("tk-epochs"), 0);
    const best = Math.max(...elbo);
    $("tk-out").textContent = cutoffs
      .map((c, i) => `C = ${String(c).padStart(3)}  ELBO ${elbo[i].toFixed(2)}  (${((100 * (best - elbo[i])) / Math.abs(best)).toFixed(2)}% below best)`)
      .join("\n");
  });
}

await init();
$("status").textContent = "Ready.";
$("ru-go").onclick = solve;
$("ec-go").onclick = curves;
$("tk-go").onclick = sweep;
solve();
