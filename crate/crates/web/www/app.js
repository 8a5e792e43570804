import init, { sampleIsing, sufficientStat, simulateMa2, ma2Posterior, abcAutocov } from "./pkg/abcnet_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const big = (id) => BigInt(Math.max(0, Math.floor(num(id))));

function guard(outId, f) {
  try {
    f();
  } catch (e) {
    $(outId).innerHTML = `<span class="err">${e.message ?? e}</span>`;
  }
}

// ---- Ising

function drawLattice(spins, m) {
  const c = $("is-canvas");
  const ctx = c.getContext("2d");
  const img = ctx.createImageData(m, m);
  spins.forEach((s, i) => {
    const v = s > 0 ? 30 : 235;
    img.data.set([v, v, v, 255], 4 * i);
  });
  const off = new OffscreenCanvas(m, m);
  off.getContext("2d").putImageData(img, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, c.width, c.height);
  ctx.drawImage(off, 0, 0, c.width, c.height);
}

function runIsing() {
  guard("is-out", () => {
    const m = num("is-m");
    const t0 = performance.now();
    const spins = sampleIsing(m, num("is-theta"), num("is-burn"), big("is-seed"));
    const ms = performance.now() - t0;
    drawLattice(spins, m);
    const s = sufficientStat(spins, m);
    const mag = spins.reduce((a, b) => a + b, 0) / spins.length;
    $("is-out").textContent =
      `S* = ${s} (range ±${2 * m * m}), magnetization ${mag.toFixed(3)}, ${ms.toFixed(0)} ms`;
  });
}

$("is-theta").addEventListener("input", () => ($("is-theta-v").textContent = $("is-theta").value));
$("is-run").addEventListener("click", runIsing);

// ---- MA(2)

let series = null;
let posterior = null;

// θ1 ∈ [−2, 2] across, θ2 ∈ [−1, 1] up.
const toPx = (c, t1, t2) => [((t1 + 2) / 4) * c.width, ((1 - t2) / 2) * c.height];

function drawPosterior(draws) {
  const c = $("ma-canvas");
  const ctx = c.getContext("2d");
  ctx.clearRect(0, 0, c.width, c.height);
  if (posterior) {
    const r = posterior.resolution;
    const mass = posterior.mass();
    const max = mass.reduce((a, b) => Math.max(a, b), 0);
    const img = ctx.createImageData(r, r);
    for (let row = 0; row < r; row++) {
      for (let col = 0; col < r; col++) {
        const w = mass[row * r + col] / max;
        const v = Math.round(255 * (1 - Math.sqrt(w)));
        img.data.set([v, v, 255, 255], 4 * ((r - 1 - row) * r + col));
      }
    }
    const off = new OffscreenCanvas(r, r);
    off.getContext("2d").putImageData(img, 0, 0);
    ctx.drawImage(off, 0, 0, c.width, c.height);
  }
  ctx.strokeStyle = "#666";
  ctx.beginPath();
  for (const [a, b] of [[-2, 1], [2, 1], [0, -1], [-2, 1]]) ctx.lineTo(...toPx(c, a, b));
  ctx.stroke();
  if (draws) {
    ctx.fillStyle = "rgba(220, 60, 20, 0.6)";
    for (let i = 0; i < draws.length; i += 2) {
      const [x, y] = toPx(c, draws[i], draws[i + 1]);
      ctx.fillRect(x - 1.5, y - 1.5, 3, 3);
    }
  }
  ctx.fillStyle = "#000";
  const [x, y] = toPx(c, num("ma-t1"), num("ma-t2"));
  ctx.fillRect(x - 3, y - 3, 6, 6);
}

function fillRow(id, label, s) {
  $(id).innerHTML = `<td>${label}</td>` + Array.from(s, (v) => `<td>${Number.isFinite(v) ? v.toFixed(4) : "NA"}</td>`).join("");
}

function runMa2() {
  guard("ma-out", () => {
    series = simulateMa2(num("ma-t1"), num("ma-t2"), num("ma-p"), big("ma-seed"));
    const t0 = performance.now();
    posterior = ma2Posterior(series, num("ma-res"));
    fillRow("row-exact", "Exact", posterior.summary());
    fillRow("row-abc", "ABC (auto-cov)", []);
    drawPosterior(null);
    $("ma-out").textContent = `grid posterior in ${(performance.now() - t0).toFixed(0)} ms`;
  });
}

function runAbc() {
  if (!series) runMa2();
  guard("ma-out", () => {
    const t0 = performance.now();
    const r = abcAutocov(series, num("abc-n"), num("abc-f"), big("ma-seed"));
    const draws = r.thetas();
    fillRow("row-abc", "ABC (auto-cov)", r.summary());
    drawPosterior(draws);
    $("ma-out").textContent =
      `${draws.length / 2} of ${r.n_proposed} proposals accepted, ε = ${r.epsilon.toPrecision(4)}, ` +
      `${(performance.now() - t0).toFixed(0)} ms`;
  });
}

$("ma-run").addEventListener("click", runMa2);
$("abc-run").addEventListener("click", runAbc);

init().then(() => {
  $("status").textContent = "Ready.";
  runIsing();
  runMa2();
});
