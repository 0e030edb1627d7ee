import init, {
  closed_trajectory,
  dissipative_trajectory,
  splitting_scan,
  cdt_amplitude,
} from "./pkg/driven_tls_wasm.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

function field(set, name) {
  return set.querySelector(`[name=${name}]`);
}

function num(set, name) {
  return Number(field(set, name).value);
}

// Split a flat row-major array into columns.
function columns(flat, width) {
  const cols = Array.from({ length: width }, () => []);
  for (let i = 0; i < flat.length; i += width) {
    for (let j = 0; j < width; j++) cols[j].push(flat[i + j]);
  }
  return cols;
}

function plot(canvas, x, series, xlabel) {
  const dpr = window.devicePixelRatio || 1;
  const w = canvas.clientWidth, h = canvas.clientHeight;
  canvas.width = w * dpr;
  canvas.height = h * dpr;
  const ctx = canvas.getContext("2d");
  ctx.scale(dpr, dpr);
  ctx.clearRect(0, 0, w, h);

  const pad = { l: 48, r: 12, t: 12, b: 32 };
  let ymin = Infinity, ymax = -Infinity;
  for (const s of series) for (const v of s.y) { ymin = Math.min(ymin, v); ymax = Math.max(ymax, v); }
  if (ymax - ymin < 1e-9) { ymin -= 1; ymax += 1; }
  const xmin = x[0], xmax = x[x.length - 1];
  const px = v => pad.l + (v - xmin) / (xmax - xmin) * (w - pad.l - pad.r);
  const py = v => h - pad.b - (v - ymin) / (ymax - ymin) * (h - pad.t - pad.b);

  ctx.strokeStyle = "#999";
  ctx.fillStyle = "#444";
  ctx.font = "11px system-ui";
  ctx.strokeRect(pad.l, pad.t, w - pad.l - pad.r, h - pad.t - pad.b);
  if (ymin < 0 && ymax > 0) {
    ctx.beginPath();
    ctx.moveTo(pad.l, py(0));
    ctx.lineTo(w - pad.r, py(0));
    ctx.stroke();
  }
  ctx.fillText(ymax.toFixed(2), 4, pad.t + 10);
  ctx.fillText(ymin.toFixed(2), 4, h - pad.b);
  ctx.fillText(xmin.toFixed(1), pad.l, h - 14);
  ctx.fillText(xmax.toFixed(1), w - pad.r - 30, h - 14);
  ctx.fillText(xlabel, w / 2, h - 4);

  series.forEach((s, k) => {
    ctx.strokeStyle = s.color || COLORS[k % COLORS.length];
    ctx.setLineDash(s.dash || []);
    ctx.beginPath();
    s.y.forEach((v, i) => (i ? ctx.lineTo(px(x[i]), py(v)) : ctx.moveTo(px(x[i]), py(v))));
    ctx.stroke();
    ctx.fillStyle = ctx.strokeStyle;
    ctx.fillText(s.label, pad.l + 8 + 90 * k, pad.t + 14);
  });
  ctx.setLineDash([]);
}

// Run `work`, reporting its duration or error in the status line.
function guarded(statusId, work) {
  const status = document.getElementById(statusId);
  status.className = "status";
  status.textContent = "running...";
  setTimeout(() => {
    const t0 = performance.now();
    try {
      const note = work();
      status.textContent = `${(performance.now() - t0).toFixed(0)} ms${note ? " · " + note : ""}`;
    } catch (e) {
      status.className = "status error";
      status.textContent = String(e.message || e);
    }
  }, 0);
}

function runClosed() {
  const set = document.getElementById("closed");
  guarded("closed-status", () => {
    const [x0, y0, z0] = field(set, "init").value.split(",").map(Number);
    const flat = closed_trajectory(num(set, "s"), num(set, "wl"), x0, y0, z0, num(set, "tend"), 2001);
    const [t, x, y, z] = columns(flat, 4);
    plot(document.getElementById("closed-plot"), t, [
      { label: "σx", y: x },
      { label: "σy", y: y },
      { label: "σz", y: z },
    ], "Δ₀t");
  });
}

function setCdt() {
  const set = document.getElementById("closed");
  guarded("closed-status", () => {
    const s = cdt_amplitude(num(set, "wl"), num(set, "k"));
    field(set, "s").value = s.toFixed(4);
    runClosed();
    return `s = ${s.toFixed(4)}`;
  });
}

function runDiss() {
  const set = document.getElementById("diss");
  guarded("diss-status", () => {
    const args = [num(set, "wl"), num(set, "g"), num(set, "om"), num(set, "gam"), 1, 0, 0, num(set, "tend"), 1001];
    const [t, xd] = columns(dissipative_trajectory(num(set, "s"), ...args), 4);
    const [, xu] = columns(dissipative_trajectory(0, ...args), 4);
    plot(document.getElementById("diss-plot"), t, [
      { label: "σx driven", y: xd },
      { label: "σx undriven", y: xu, color: "#888" },
    ], "Δ₀t");
  });
}

function runScan() {
  const set = document.getElementById("scan");
  guarded("scan-status", () => {
    const [r, split, formula] = columns(splitting_scan(num(set, "wl"), num(set, "rmax"), num(set, "n")), 3);
    plot(document.getElementById("scan-plot"), r, [
      { label: "monodromy", y: split },
      { label: "J₀(s/ω_L)", y: formula, dash: [5, 4], color: "#888" },
    ], "s/ω_L");
  });
}

await init();
field(document.getElementById("closed"), "run").onclick = runClosed;
field(document.getElementById("closed"), "cdt").onclick = setCdt;
field(document.getElementById("diss"), "run").onclick = runDiss;
field(document.getElementById("scan"), "run").onclick = runScan;
runClosed();
runDiss();
runScan();
