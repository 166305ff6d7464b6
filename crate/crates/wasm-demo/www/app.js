import init, { tune_synthetic, solve_tsp, compare_selections } from "./pkg/racetune_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function guard(out, f) {
  try {
    f();
  } catch (e) {
    out.innerHTML = `<p class="err">${e.message ?? e}</p>`;
  }
}

function table(head, rows) {
  const th = head.map((h) => `<th>${h}</th>`).join("");
  const tr = rows.map((r) => `<tr>${r.map((c) => `<td>${c}</td>`).join("")}</tr>`).join("");
  return `<table><tr>${th}</tr>${tr}</table>`;
}

function runTune() {
  const out = $("tune-out");
  guard(out, () => {
    const r = JSON.parse(tune_synthetic($("tune-strategy").value, num("tune-budget"), num("tune-seed")));
    const rows = r.races.map((x) => [x.race, x.candidates, x.evaluations, x.survivors, x.diversity.toFixed(3), x.best_cost.toFixed(4)]);
    const best = r.best.map(([k, v]) => `${k}=${v}`).join("  ");
    out.innerHTML =
      `<p>${r.used} of ${r.budget} evaluations. Final elite costs: ${r.elite_costs.map((c) => c.toFixed(4)).join(", ")}</p>` +
      `<pre>${best}</pre>` +
      table(["race", "candidates", "evaluations", "survivors", "D", "best cost"], rows);
  });
}

function scaler(points, canvas, pad = 20) {
  const xs = points.map((p) => p[0]);
  const ys = points.map((p) => p[1]);
  const [x0, x1, y0, y1] = [Math.min(...xs), Math.max(...xs), Math.min(...ys), Math.max(...ys)];
  const s = Math.min((canvas.width - 2 * pad) / (x1 - x0 || 1), (canvas.height - 2 * pad) / (y1 - y0 || 1));
  return ([x, y]) => [pad + (x - x0) * s, canvas.height - pad - (y - y0) * s];
}

function runTsp() {
  const out = $("tsp-out");
  guard(out, () => {
    const r = JSON.parse(solve_tsp(num("tsp-n"), num("tsp-seed"), $("tsp-alg").value, $("tsp-ls").checked, num("tsp-budget"), num("tsp-seed")));
    out.innerHTML = `<p>best tour length ${r.length} after ${r.history.length} colony iterations</p>`;
    const canvas = $("tsp-canvas");
    const ctx = canvas.getContext("2d");
    const at = scaler(r.coords, canvas);
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    ctx.strokeStyle = "#2a6fb0";
    ctx.beginPath();
    r.tour.forEach((c, i) => {
      const [x, y] = at(r.coords[c]);
      i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y);
    });
    ctx.closePath();
    ctx.stroke();
    ctx.fillStyle = "#222";
    for (const p of r.coords) {
      const [x, y] = at(p);
      ctx.fillRect(x - 2, y - 2, 4, 4);
    }
  });
}

const COLORS = { greedy: "#d62728", rand: "#ff7f0e", entropy: "#2ca02c", gower: "#1f77b4" };

function runSelection() {
  const out = $("sel-out");
  guard(out, () => {
    const r = JSON.parse(compare_selections(num("sel-n"), num("sel-k"), num("sel-seed")));
    const rank = new Map(r.population.map((p, i) => [p.id, i + 1]));
    const rows = r.selections.map((s) => [
      `<span style="color:${COLORS[s.strategy]}">${s.strategy}</span>`,
      s.diversity.toFixed(3),
      s.members.map((id) => rank.get(id)).join(" "),
    ]);
    out.innerHTML = table(["strategy", "D", "ranks picked"], rows);
    const canvas = $("sel-canvas");
    const ctx = canvas.getContext("2d");
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    const at = scaler([[-5, -5], [5, 5]], canvas);
    for (const p of r.population) {
      const [x, y] = at([p.x1, p.x2]);
      ctx.fillStyle = "#999";
      ctx.fillText(p.c1, x + 4, y - 4);
      ctx.fillRect(x - 2, y - 2, 4, 4);
    }
    r.selections.forEach((s, k) => {
      ctx.strokeStyle = COLORS[s.strategy];
      for (const id of s.members) {
        const p = r.population.find((q) => q.id === id);
        const [x, y] = at([p.x1, p.x2]);
        ctx.beginPath();
        ctx.arc(x, y, 6 + 3 * k, 0, 2 * Math.PI);
        ctx.stroke();
      }
    });
  });
}

await init();
$("tune-run").onclick = runTune;
$("tsp-run").onclick = runTsp;
$("sel-run").onclick = runSelection;
