import init, { bellCurve, tomography, certify } from "./pkg/sic_certify_web.js";

const $ = (id) => document.getElementById(id);

function guard(target, f) {
  try {
    f();
  } catch (e) {
    target.innerHTML = `<p class="error">${e.message ?? e}</p>`;
  }
}

function plotCurve(data) {
  const w = 640, h = 320, m = 40;
  const lo = Math.min(...data.value, data.local_bound);
  const hi = Math.max(...data.value, data.local_bound);
  const sx = (v) => m + (w - 2 * m) * v;
  const sy = (y) => h - m - (h - 2 * m) * (y - lo) / (hi - lo || 1);
  const pts = data.visibility.map((v, i) => `${sx(v).toFixed(1)},${sy(data.value[i]).toFixed(1)}`).join(" ");
  const yl = sy(data.local_bound).toFixed(1);
  return `<svg width="${w}" height="${h}" font-size="12">
    <line x1="${m}" y1="${h - m}" x2="${w - m}" y2="${h - m}" stroke="#000"/>
    <line x1="${m}" y1="${m}" x2="${m}" y2="${h - m}" stroke="#000"/>
    <line x1="${m}" y1="${yl}" x2="${w - m}" y2="${yl}" stroke="#999" stroke-dasharray="4,4"/>
    <text x="${w - m - 80}" y="${Number(yl) - 4}">local bound</text>
    <polyline fill="none" stroke="#1f77b4" stroke-width="2" points="${pts}"/>
    <text x="${w / 2}" y="${h - 8}">visibility</text>
    <text x="4" y="${m - 8}">${hi.toFixed(3)}</text>
    <text x="4" y="${h - m}">${lo.toFixed(3)}</text>
  </svg>`;
}

await init();

$("curve-run").onclick = () => guard($("curve-plot"), () => {
  const data = JSON.parse(bellCurve($("curve-functional").value, 101));
  $("curve-plot").innerHTML = plotCurve(data);
});

$("tomo-run").onclick = () => guard($("tomo-svg"), () => {
  const r = JSON.parse(tomography(
    Number($("tomo-v").value), Number($("tomo-rate").value),
    Number($("tomo-reps").value), BigInt($("tomo-seed").value)));
  $("tomo-svg").innerHTML = r.svg;
  const fmt = (v) => v.map((x) => x.toFixed(3).padStart(7)).join(" ");
  $("tomo-table").textContent = r.projective
    .map((p, i) => `${i + 1}  ${fmt(p)}   ${fmt(r.sic[i])}   F = ${r.fidelity[i].toFixed(4)}`)
    .join("\n");
});

$("cert-run").onclick = () => guard($("cert-out"), () => {
  const r = JSON.parse(certify($("cert-functional").value, $("cert-level").value,
    Number($("cert-v").value), BigInt($("cert-seed").value)));
  $("cert-out").textContent =
    `value  ${r.value.toFixed(4)} +- ${r.sigma.toFixed(4)}\n` +
    `bound  ${r.bound.toFixed(4)} (level ${r.level}, outcome ${r.dropped_outcome} dropped)\n` +
    `gap    ${r.gap.toFixed(4)}  (${r.significance?.toFixed(2)} sigma)\n` +
    `certified: ${r.certified}`;
});
