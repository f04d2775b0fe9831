import init, { Session, analytic_curve, fd_spectrum } from "./pkg/eigennet_web.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

// Draws series of [xs, ys, color, dashed] scaled to the canvas.
function plot(canvas, series) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  const xs = series.flatMap(s => Array.from(s[0]));
  const ys = series.flatMap(s => Array.from(s[1])).filter(Number.isFinite);
  if (!xs.length || !ys.length) return;
  const [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  let [y0, y1] = [Math.min(...ys), Math.max(...ys)];
  if (y1 - y0 < 1e-9) { y0 -= 1; y1 += 1; }
  const pad = 20;
  const sx = x => pad + (x - x0) / (x1 - x0) * (w - 2 * pad);
  const sy = y => h - pad - (y - y0) / (y1 - y0) * (h - 2 * pad);
  ctx.strokeStyle = "#aaa";
  ctx.beginPath();
  ctx.moveTo(pad, sy(0));
  ctx.lineTo(w - pad, sy(0));
  ctx.stroke();
  for (const [px, py, color, dashed] of series) {
    ctx.strokeStyle = color;
    ctx.setLineDash(dashed ? [5, 4] : []);
    ctx.beginPath();
    px.forEach((x, i) => (i ? ctx.lineTo(sx(x), sy(py[i])) : ctx.moveTo(sx(x), sy(py[i]))));
    ctx.stroke();
  }
  ctx.setLineDash([]);
}

function rows(flat, m) {
  const n = flat.length / m;
  return Array.from({ length: m }, (_, i) => flat.subarray(i * n, (i + 1) * n));
}

let session = null;
let running = false;

function drawSession(info) {
  const grid = session.grid();
  const m = session.outputs();
  const series = rows(session.values(), m).map((u, i) => [grid, u, COLORS[i % COLORS.length], false]);
  const ref = session.reference();
  if (ref.length) {
    rows(ref, ref.length / grid.length).forEach(u => series.push([grid, u, "#888", true]));
  }
  plot(document.getElementById("train-plot"), series);
  const epoch = info[0];
  let text = `epoch ${epoch}`;
  if (info.length > 1) {
    const rq = Array.from(info.slice(2, 2 + m), v => v.toFixed(4));
    const sd = Array.from(info.slice(2 + m, 2 + 2 * m), v => v.toFixed(4));
    text += `   loss ${info[1].toFixed(5)}\nRayleigh mean [${rq.join(", ")}]\nRayleigh std  [${sd.join(", ")}]`;
  }
  document.getElementById("status").textContent = text;
}

function reset() {
  const problem = document.getElementById("problem").value;
  const seed = Number(document.getElementById("seed").value) || 0;
  session = new Session(problem, seed);
  drawSession(session.step(0));
}

function loop() {
  if (!running) return;
  try {
    drawSession(session.step(1));
  } catch (e) {
    running = false;
    document.getElementById("toggle").textContent = "Start";
    document.getElementById("status").textContent = String(e);
    return;
  }
  requestAnimationFrame(loop);
}

function drawExact() {
  const problem = document.getElementById("exact-problem").value;
  const k = Number(document.getElementById("exact-k").value) || 1;
  const v = analytic_curve(problem, k, 400);
  const [xs, us] = rows(v, 2);
  plot(document.getElementById("exact-plot"), [[xs, us, COLORS[0], false]]);
}

function drawSpectrum() {
  const n = Math.max(1, Number(document.getElementById("fd-n").value) || 1);
  const v = fd_spectrum(n, 8);
  const count = v.length / 2;
  const table = document.getElementById("fd-table");
  table.innerHTML = "<tr><th>k</th><th>exact k&sup2;</th><th>finite difference</th><th>relative error</th></tr>";
  for (let k = 0; k < count; k++) {
    const exact = v[k];
    const fd = v[count + k];
    const tr = document.createElement("tr");
    for (const cell of [k + 1, exact, fd.toFixed(8), (Math.abs(fd - exact) / exact).toExponential(3)]) {
      const td = document.createElement("td");
      td.textContent = cell;
      tr.appendChild(td);
    }
    table.appendChild(tr);
  }
}

await init();
reset();
drawExact();
drawSpectrum();
document.getElementById("reset").onclick = () => { running = false; document.getElementById("toggle").textContent = "Start"; reset(); };
document.getElementById("problem").onchange = document.getElementById("reset").onclick;
document.getElementById("toggle").onclick = e => {
  running = !running;
  e.target.textContent = running ? "Pause" : "Start";
  if (running) loop();
};
document.getElementById("exact-problem").onchange = drawExact;
document.getElementById("exact-k").oninput = drawExact;
document.getElementById("fd-n").oninput = drawSpectrum;
