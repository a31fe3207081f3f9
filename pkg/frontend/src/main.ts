import { StudioClient } from "./api.js";
import { StudioApp, StudioElements } from "./ui.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const elements: StudioElements = {
  imageInput: el("image-input"),
  soundList: el("sound-list"),
  gainSlider: el("gain-slider"),
  gainValue: el("gain-value"),
  alphaSlider: el("alpha-slider"),
  alphaRow: el("alpha-row"),
  applyButton: el("apply-button"),
  preview: el("preview"),
  historyStrip: el("history-strip"),
  compareButton: el("compare-button"),
  comparePanel: el("compare-panel"),
  errorBanner: el("error-banner"),
  fieldError: el("field-error"),
  seedLabel: el("seed-label"),
};

const app = new StudioApp(elements, new StudioClient(""));
void app.loadSounds();
