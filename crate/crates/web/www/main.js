import init, { Demo } from "./pkg/wipp_mlmc_web.js";

const $ = (id) => document.getElementById(id);
let demo = null;

// viridis-like ramp, enough for a demo
const RAMP = [[68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37]];

function color(t) {
  t = Math.min(1, Math.max(0, t)) * (RAMP.length - 1);
  const i = Math.min(RAMP.length - 2, Math.floor(t));
  const f = t - i;
  return RAMP[i].map((c, k) => Math.round(c + f * (RAMP[i + 1][k] - c)));
}

function toCanvas(geo, canvas) {
  const [x0, y0, x1, y1] = geo;
  return (x, y) => [((x - x0) / (x1 - x0)) * canvas.width, canvas.height - ((y - y0) / (y1 - y0)) * canvas.height];
}

function drawMap(canvas, values, n, lo, hi) {
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(n, n);
  for (let j = 0; j < n; j++) {
    for (let i = 0; i < n; i++) {
      const [r, g, b] = color((values[i + j * n] - lo) / (hi - lo));
      const k = 4 * (i + (n - 1 - j) * n);
      img.data.set([r, g, b, 255], k);
    }
  }
  const tmp = document.createElement("canvas");
  tmp.width = tmp.height = n;
  tmp.getContext("2d").putImageData(img, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(tmp, 0, 0, canvas.width, canvas.height);
  overlay(canvas);
}

function overlay(canvas) {
  const ctx = canvas.getContext("2d");
  const geo = demo.geometry();
  const p = toCanvas(geo, canvas);
  const [a, b] = p(geo[4], geo[7]);
  const [c, d] = p(geo[6], geo[5]);
  ctx.strokeStyle = "white";
  ctx.lineWidth = 1.5;
  ctx.strokeRect(a, b, c - a, d - b);
  const bh = demo.boreholes();
  ctx.fillStyle = "black";
  for (let k = 0; k < bh.length; k += 3) {
    const [x, y] = p(bh[k], bh[k + 1]);
    ctx.beginPath();
    ctx.arc(x, y, 2.5, 0, 2 * Math.PI);
    ctx.fill();
  }
}

function drawPath(canvas, path) {
  const ctx = canvas.getContext("2d");
  const p = toCanvas(demo.geometry(), canvas);
  ctx.strokeStyle = "red";
  ctx.lineWidth = 2;
  ctx.beginPath();
  for (let k = 0; k < path.length; k += 2) {
    const [x, y] = p(path[k], path[k + 1]);
    k === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y);
  }
  ctx.stroke();
}

const range = (v) => [Math.min(...v), Math.max(...v)];

function timed(label, f) {
  const t0 = performance.now();
  try {
    f();
    $("status").textContent = `${label} in ${(performance.now() - t0).toFixed(0)} ms`;
  } catch (e) {
    $("status").textContent = `error: ${e.message ?? e}`;
  }
}

function ensureDemo() {
  const n = Number($("n").value);
  if (!demo || demo.n() !== n) {
    demo?.free();
    demo = new Demo(n);
  }
  return n;
}

function seed() {
  return Math.max(0, Math.floor(Number($("seed").value))) >>> 0;
}

$("draw").onclick = () =>
  timed("field drawn", () => {
    const n = ensureDemo();
    const cond = $("cond").checked;
    const f = demo.field(seed(), cond);
    drawMap($("left"), f, n, -9, -1);
    $("left-cap").textContent = `log10 T (${cond ? "conditional" : "unconditional"}), colour range −9 … −1`;
    const u = demo.field(seed(), !cond);
    drawMap($("right"), u, n, -9, -1);
    $("right-cap").textContent = `same seed, ${cond ? "unconditional" : "conditional"}`;
  });

$("krige").onclick = () =>
  timed("kriging map", () => {
    const n = ensureDemo();
    const k = demo.kriging();
    const mean = k.subarray(0, n * n);
    const std = k.subarray(n * n);
    const [lo, hi] = range(mean);
    drawMap($("left"), mean, n, lo, hi);
    $("left-cap").textContent = `kriging mean of log10 T, ${lo.toFixed(2)} … ${hi.toFixed(2)}`;
    const [slo, shi] = range(std);
    drawMap($("right"), std, n, slo, shi);
    $("right-cap").textContent = `kriging standard deviation, ${slo.toFixed(2)} … ${shi.toFixed(2)}`;
  });

$("solve").onclick = () =>
  timed("solved", () => {
    const n = ensureDemo();
    const flow = demo.flow(seed(), $("cond").checked);
    drawMap($("left"), flow.field(), n, -9, -1);
    drawPath($("left"), flow.path());
    const head = flow.head();
    const [lo, hi] = range(head);
    drawMap($("right"), head, n, lo, hi);
    drawPath($("right"), flow.path());
    const years = flow.years();
    $("left-cap").textContent = flow.exited()
      ? `travel time ${years.toExponential(3)} years (log10 = ${Math.log10(years).toFixed(3)})`
      : `particle did not reach the site boundary`;
    $("right-cap").textContent = `head ${lo.toFixed(1)} … ${hi.toFixed(1)} m`;
    flow.free();
  });

await init();
ensureDemo();
$("status").textContent = "ready";
$("draw").click();
