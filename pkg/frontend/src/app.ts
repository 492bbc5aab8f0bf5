/** DOM shell: wires sliders, panes, and session controls to the service. */

import { ApiClient } from "./api.js";
import { LatentState } from "./state.js";
import { RenderScheduler } from "./scheduler.js";
import { buildInterpolation, buildSweepCodes, MAX_SWEEP_STEPS } from "./sweep.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el as T;
};

function setBanner(message: string | null): void {
  const banner = $("banner");
  banner.textContent = message ?? "";
  banner.style.display = message ? "block" : "none";
}

async function main(): Promise<void> {
  const params = new URLSearchParams(location.search);
  const base = params.get("api") ?? `http://${location.hostname || "127.0.0.1"}:8765`;
  const api = new ApiClient(base);

  if (!(await api.health())) {
    setBanner(`service unreachable at ${base} — start it with: lfgan serve <checkpoint>`);
    return;
  }
  const info = await api.model();
  const state = new LatentState(info);
  $("meta").textContent = `d=${info.d}, ${info.s} injection stages @ ${base}`;

  const image = $<HTMLImageElement>("image");
  let imageUrl: string | null = null;
  const scheduler = new RenderScheduler(async (latent, signal) => {
    try {
      const blob = await api.generate(latent, signal);
      if (imageUrl) URL.revokeObjectURL(imageUrl);
      imageUrl = URL.createObjectURL(blob);
      image.src = imageUrl;
      setBanner(null);
    } catch (err) {
      if ((err as Error).name !== "AbortError") {
        setBanner(`service unreachable — sliders kept their values (${(err as Error).message})`);
      }
    }
  });
  const rerender = () => scheduler.request(state.values);

  // sliders, one group per injection stage
  const groups = $("sliders");
  const sliders: HTMLInputElement[] = [];
  state.partitions.forEach(([start, end], stage) => {
    const fieldset = document.createElement("fieldset");
    const legend = document.createElement("legend");
    legend.textContent = `stage ${stage} (elements ${start}–${end - 1})`;
    fieldset.appendChild(legend);
    for (let i = start; i < end; i++) {
      const row = document.createElement("label");
      row.className = "slider-row";
      const name = document.createElement("span");
      name.textContent = `h[${i}]`;
      const slider = document.createElement("input");
      slider.type = "range";
      slider.min = "-1";
      slider.max = "1";
      slider.step = "0.01";
      slider.value = "0";
      slider.addEventListener("input", () => {
        if (state.set(i, Number(slider.value))) rerender();
        else slider.value = String(state.values[i]); // pinned: snap back
      });
      const pin = document.createElement("input");
      pin.type = "checkbox";
      pin.title = "pin";
      pin.addEventListener("change", () => (pin.checked ? state.pin(i) : state.unpin(i)));
      row.append(name, slider, pin);
      fieldset.appendChild(row);
      sliders.push(slider);
    }
    groups.appendChild(fieldset);
  });

  const syncSliders = () => {
    state.values.forEach((v, i) => (sliders[i]!.value = String(v)));
  };

  $("reset").addEventListener("click", () => {
    state.reset();
    syncSliders();
    rerender();
  });

  // element sweep strip
  const sweepPane = $("sweep-strip");
  $("sweep").addEventListener("click", async () => {
    const index = Number($<HTMLInputElement>("sweep-element").value);
    const steps = Number($<HTMLInputElement>("sweep-steps").value);
    let codes: number[][];
    try {
      codes = buildSweepCodes(state.values, index, steps);
    } catch (err) {
      setBanner((err as Error).message);
      return;
    }
    sweepPane.replaceChildren();
    for (const code of codes) {
      try {
        const blob = await api.generate(code); // strip renders sequentially
        const img = document.createElement("img");
        img.src = URL.createObjectURL(blob);
        sweepPane.appendChild(img);
      } catch (err) {
        setBanner(`sweep stopped: ${(err as Error).message}`);
        return;
      }
    }
  });

  // interpolation toward a saved target
  const interpPane = $("interp-strip");
  $("save-target").addEventListener("click", () => {
    state.saveTarget();
    $("target-label").textContent = "target saved";
  });
  $("interpolate").addEventListener("click", async () => {
    const target = state.target;
    if (!target) {
      setBanner("save a target first");
      return;
    }
    const steps = Math.min(MAX_SWEEP_STEPS, Number($<HTMLInputElement>("interp-steps").value));
    try {
      const frames = await api.interpolate(buildInterpolation(state.values, target, steps));
      interpPane.replaceChildren(
        ...frames.map((b64) => {
          const img = document.createElement("img");
          img.src = `data:image/png;base64,${b64}`;
          return img;
        }),
      );
    } catch (err) {
      setBanner(`interpolation failed: ${(err as Error).message}`);
    }
  });

  // session export / import
  $("export").addEventListener("click", () => {
    $<HTMLTextAreaElement>("session").value = JSON.stringify(state.exportSession());
  });
  $("import").addEventListener("click", () => {
    try {
      state.importSession(JSON.parse($<HTMLTextAreaElement>("session").value));
      syncSliders();
      rerender();
    } catch (err) {
      setBanner(`session import failed: ${(err as Error).message}`);
    }
  });

  rerender(); // baseline image at all-zero code
}

void main();
