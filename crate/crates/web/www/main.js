import init, { simulate_cable, heat_convergence, ou_quantiles } from "./pkg/axonfd_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function timed(status, f) {
  const t0 = performance.now();
  try {
    const msg = f();
    $(status).textContent = `${msg} (${((performance.now() - t0) / 1000).toFixed(2)} s)`;
  } catch (e) {
    $(status).textContent = `error: ${e.message ?? e}`;
  }
}

function color(s) {
  // blue -> white -> red
  const c = Math.max(0, Math.min(1, s));
  const r = c < 0.5 ? 2 * c : 1;
  const b = c < 0.5 ? 1 : 2 * (1 - c);
  const g = 1 - Math.abs(2 * c - 1);
  return [255 * r, 255 * g, 255 * b];
}

function drawCable() {
  timed("cable-status", () => {
    const st = simulate_cable($("model").value, num("n"), num("dt"), num("t"),
      num("noise"), num("stim"), 320, num("seed"));
    const w = st.width(), h = st.snapshots();
    const u = st.potential();
    const lo = st.u_min(), hi = st.u_max();
    const cv = $("cable"), ctx = cv.getContext("2d");
    const img = ctx.createImageData(w, h);
    for (let i = 0; i < w * h; i++) {
      const [r, g, b] = color((u[i] - lo) / (hi - lo || 1));
      img.data.set([r, g, b, 255], 4 * i);
    }
    const off = new OffscreenCanvas(w, h);
    off.getContext("2d").putImageData(img, 0, 0);
    ctx.imageSmoothingEnabled = false;
    ctx.drawImage(off, 0, 0, cv.width, cv.height);
    const msg = `${h} snapshots, u in [${lo.toFixed(3)}, ${hi.toFixed(3)}]`;
    st.free();
    return msg;
  });
}

function drawHeat() {
  timed("heat-status", () => {
    const c = heat_convergence(num("h-n0"), num("h-levels"), num("h-dt"), num("h-t"));
    const ns = c.ns(), es = c.errors(), slope = c.slope();
    c.free();
    const cv = $("heat"), ctx = cv.getContext("2d");
    ctx.clearRect(0, 0, cv.width, cv.height);
    const lx = ns.map(Math.log10), ly = es.map(Math.log10);
    const [x0, x1] = [Math.min(...lx), Math.max(...lx)];
    const [y0, y1] = [Math.min(...ly), Math.max(...ly)];
    const pad = 40;
    const px = (v) => pad + (v - x0) / (x1 - x0 || 1) * (cv.width - 2 * pad);
    const py = (v) => cv.height - pad - (v - y0) / (y1 - y0 || 1) * (cv.height - 2 * pad);
    ctx.strokeStyle = "#888";
    ctx.strokeRect(pad, pad, cv.width - 2 * pad, cv.height - 2 * pad);
    ctx.fillStyle = "#000";
    ctx.fillText("log10 n", cv.width / 2 - 15, cv.height - 10);
    ctx.fillText("log10 err", 2, pad - 8);
    ctx.strokeStyle = "#c00";
    ctx.beginPath();
    lx.forEach((x, i) => (i ? ctx.lineTo(px(x), py(ly[i])) : ctx.moveTo(px(x), py(ly[i]))));
    ctx.stroke();
    lx.forEach((x, i) => ctx.fillRect(px(x) - 3, py(ly[i]) - 3, 6, 6));
    return `fitted slope ${slope.toFixed(4)}`;
  });
}

function runOu() {
  timed("ou-status", () => {
    const ns = [16, 32, 64, 128, 256];
    const q = num("o-q");
    const vals = ou_quantiles(new Uint32Array(ns), num("o-paths"), 1e-2, num("o-t"), q, 1);
    const rows = ns.map((n, i) => `<tr><td>${n}</td><td>${vals[i].toFixed(4)}</td></tr>`);
    $("ou").innerHTML = `<tr><th>n</th><th>q${q}</th></tr>` + rows.join("");
    const spread = (Math.max(...vals) - Math.min(...vals)) / Math.min(...vals);
    return `relative spread ${(100 * spread).toFixed(2)}%`;
  });
}

await init();
$("run-cable").onclick = drawCable;
$("run-heat").onclick = drawHeat;
$("run-ou").onclick = runOu;
