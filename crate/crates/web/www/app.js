import init, { partialDecryption, shamir, Estate } from "./pkg/heirloom_web.js";

const $ = (id) => document.getElementById(id);
const seed = () => Math.floor(Math.random() * 2 ** 32);
const esc = (s) => s.replace(/[&<>]/g, (c) => ({ "&": "&amp;", "<": "&lt;", ">": "&gt;" })[c]);

function runPartial() {
  try {
    const r = JSON.parse(partialDecryption($("pd-files").value, $("pd-attrs").value, seed()));
    const rows = r.files.map((f) =>
      `<tr><td>${esc(f.name)}</td><td><code>${esc(f.policy)}</code></td>` +
      (f.recovered ? `<td class="ok">${esc(f.text)}</td>` : `<td class="no">denied</td>`) + "</tr>").join("");
    $("pd-out").innerHTML =
      `<table><tr><th>file</th><th>policy</th><th>result</th></tr>${rows}</table>` +
      `<p>${r.dag_nodes} shared policy nodes (${r.standalone_nodes} if encrypted separately), ` +
      `${r.attribute_pairs} attribute pairs, ${r.pairings} pairings, ${r.ciphertext_bytes} bytes.</p>`;
  } catch (e) {
    $("pd-out").innerHTML = `<p class="no">${esc(String(e))}</p>`;
  }
}

let shareSeed = seed();
function runShamir(pickAll) {
  const n = Number($("sh-n").value), t = Number($("sh-t").value);
  const boxes = [...document.querySelectorAll("#shares input")];
  const used = pickAll ? [...Array(t).keys()].map((i) => i + 1)
                       : boxes.filter((b) => b.checked).map((b) => Number(b.value));
  try {
    const r = JSON.parse(shamir($("sh-secret").value, n, t, new Uint8Array(used), shareSeed));
    if (pickAll) {
      $("shares").innerHTML = r.shares.map((hex, i) =>
        `<label><input type="checkbox" value="${i + 1}" ${used.includes(i + 1) ? "checked" : ""}> #${i + 1} ${hex.slice(0, 16)}${hex.length > 16 ? "..." : ""}</label>`).join("");
      document.querySelectorAll("#shares input").forEach((b) => b.addEventListener("change", () => runShamir(false)));
    }
    $("sh-out").innerHTML = r.reconstructed !== null
      ? `<p class="ok">shares ${r.used.join(", ")} rebuild: ${esc(r.reconstructed)}</p>`
      : `<p class="no">shares ${r.used.join(", ") || "none"}: ${esc(r.error)}</p>`;
  } catch (e) {
    $("shares").innerHTML = "";
    $("sh-out").innerHTML = `<p class="no">${esc(String(e))}</p>`;
  }
}

let estate;
function show(json) {
  const v = JSON.parse(json);
  $("es-state").textContent = v.state;
  $("es-day").textContent = v.now_days.toFixed(0);
  $("es-msg").textContent = v.message;
  $("es-msg").className = v.message.startsWith("rejected") ? "no" : "";
  $("es-ledger").textContent = v.ledger.join("\n");
}
function resetEstate() {
  estate = new Estate(seed());
  show(estate.status());
}

await init();
$("loading").remove();
$("pd-run").addEventListener("click", runPartial);
$("sh-split").addEventListener("click", () => { shareSeed = seed(); runShamir(true); });
$("es-reset").addEventListener("click", resetEstate);
document.querySelectorAll("button[data-act]").forEach((b) => b.addEventListener("click", () => {
  const who = b.dataset.who;
  $("es-msg").textContent = "working...";
  setTimeout(() => {
    switch (b.dataset.act) {
      case "vote": show(estate.vote(who)); break;
      case "veto": show(estate.veto(who)); break;
      case "advance": show(estate.advanceDays(7)); break;
      case "execute": show(estate.execute()); break;
      case "retrieve": show(estate.retrieve(who)); break;
    }
  }, 10);
}));
runPartial();
runShamir(true);
resetEstate();
