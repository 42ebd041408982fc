import init, { explore_sampling, stratified_pick, Game } from "./pkg/memarch_demo.js";

const $ = (id) => document.getElementById(id);

function renderSampling() {
  const records = $("records").value
    .split("\n")
    .map((l) => l.trim())
    .filter(Boolean)
    .map((l) => {
      const [score, visits] = l.split(/\s+/).map(Number);
      return { score, visits };
    });
  const out = JSON.parse(
    explore_sampling(JSON.stringify(records), +$("f0").value, +$("lambda").value, +$("alpha").value, +$("temp").value),
  );
  if (out.error) {
    $("dist").innerHTML = `<p class="err">${out.error}</p>`;
    return;
  }
  const rows = out.rows
    .map(
      (r, i) => `<tr><td>${i}</td><td>${records[i].score}</td><td>${records[i].visits}</td>
        <td>${r.normalized.toFixed(4)}</td><td>${r.sampling_score.toFixed(4)}</td>
        <td>${r.probability.toFixed(4)}</td>
        <td style="width:240px;text-align:left"><div class="bar" style="width:${(r.probability * 100).toFixed(1)}%"></div></td></tr>`,
    )
    .join("");
  $("dist").innerHTML = `<table><tr><th>#</th><th>score</th><th>visits</th><th>f̂</th><th>J</th><th>p</th><th></th></tr>${rows}</table>`;
}

function renderStratified() {
  const text = $("outcomes").value.trim();
  const out = JSON.parse(stratified_pick(text, +$("k").value, BigInt(+$("seed").value)));
  if (out.error) {
    $("strat").innerHTML = `<p class="err">${out.error}</p>`;
    return;
  }
  const picked = new Set(out.picked);
  const toks = [...text.replace(/\s/g, "")]
    .map((c, i) => `<span class="tok ${c.toLowerCase()} ${picked.has(i) ? "on" : ""}">${c}</span>`)
    .join("");
  $("strat").innerHTML = `<p>${toks}</p><p>${out.successes} successes and ${out.failures} failures shown.</p>`;
}

let game = null;

function say(text, cls = "") {
  const line = document.createElement("div");
  line.className = cls;
  line.textContent = text;
  $("log").appendChild(line);
  $("log").scrollTop = $("log").scrollHeight;
}

function startGame() {
  if (game) game.free();
  $("log").innerHTML = "";
  try {
    game = new Game($("family").value, BigInt(+$("gseed").value));
  } catch (e) {
    game = null;
    say(String(e), "err");
    return;
  }
  $("goal").textContent = `Goal: ${game.goal()} (${game.max_steps()} steps)`;
  say(game.observation());
}

function act(ev) {
  ev.preventDefault();
  if (!game) return;
  const action = $("action").value.trim();
  if (!action) return;
  $("action").value = "";
  say(`> ${action}`);
  const out = JSON.parse(game.act(action));
  if (out.error) {
    say(out.error, "err");
    return;
  }
  say(out.observation);
  if (out.done) say(`Episode over after ${game.steps_taken()} steps, score ${out.score}.`);
}

await init();
for (const id of ["records", "f0", "lambda", "alpha", "temp"]) $(id).addEventListener("input", renderSampling);
for (const id of ["outcomes", "k", "seed"]) $(id).addEventListener("input", renderStratified);
$("start").addEventListener("click", startGame);
$("actform").addEventListener("submit", act);
renderSampling();
renderStratified();
startGame();
