import init, { tone_frames, ctc_report, metrics_report, emotions } from "./pkg/emoseq_demo.js";

const $ = (id) => document.getElementById(id);

function show(target, fn) {
  try {
    target.classList.remove("error");
    target.textContent = fn();
  } catch (e) {
    target.classList.add("error");
    target.textContent = String(e.message ?? e);
  }
}

function drawFrame(values, scale) {
  const canvas = document.createElement("canvas");
  canvas.width = 40;
  canvas.height = 40;
  canvas.style.width = `${40 * scale}px`;
  canvas.style.height = `${40 * scale}px`;
  let lo = Infinity, hi = -Infinity;
  for (const v of values) { lo = Math.min(lo, v); hi = Math.max(hi, v); }
  const span = hi > lo ? hi - lo : 1;
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(40, 40);
  for (let band = 0; band < 40; band++) {
    for (let col = 0; col < 40; col++) {
      const v = Math.round(255 * (values[band * 40 + col] - lo) / span);
      // low bands at the bottom
      const px = ((39 - band) * 40 + col) * 4;
      img.data[px] = v;
      img.data[px + 1] = v;
      img.data[px + 2] = Math.round(v * 0.6 + 60);
      img.data[px + 3] = 255;
    }
  }
  ctx.putImageData(img, 0, 0);
  return canvas;
}

function renderFrames() {
  const out = $("frames");
  out.replaceChildren();
  try {
    const view = tone_frames(+$("f0").value, +$("seconds").value, +$("noise").value, 0n);
    const channel = +$("channel").value;
    for (let k = 0; k < view.count(); k++) {
      const c = drawFrame(view.channel(k, channel), 3);
      c.title = `frame ${k}, starts at ${view.start_time(k).toFixed(1)} s`;
      out.appendChild(c);
    }
    $("frames-info").classList.remove("error");
    $("frames-info").textContent = `${view.count()} frames (5 per second, 0.4 s each)`;
    view.free();
  } catch (e) {
    $("frames-info").classList.add("error");
    $("frames-info").textContent = String(e.message ?? e);
  }
}

await init();
$("emotion-list").textContent = emotions().join(", ");
$("render").addEventListener("click", renderFrames);
$("decode").addEventListener("click", () => show($("ctc-out"), () => ctc_report($("posteriors").value, $("label").value)));
$("score").addEventListener("click", () =>
  show($("metrics-out"), () => JSON.stringify(JSON.parse(metrics_report($("truth").value, $("predicted").value)), null, 1)));
renderFrames();
