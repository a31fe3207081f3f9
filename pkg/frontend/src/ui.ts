/** DOM wiring: sound picker, sliders, preview, history strip, compare view.
 * All pixels come from the service; nothing is rendered locally. */

import { FieldError, ServerError, SoundEntry, StudioClient } from "./api.js";
import { ALPHA_RANGE, EditSession, GAIN_RANGE, HistoryEntry } from "./session.js";

export interface StudioElements {
  imageInput: HTMLInputElement;
  soundList: HTMLElement;
  gainSlider: HTMLInputElement;
  gainValue: HTMLElement;
  alphaSlider: HTMLInputElement;
  alphaRow: HTMLElement;
  applyButton: HTMLButtonElement;
  preview: HTMLImageElement;
  historyStrip: HTMLElement;
  compareButton: HTMLButtonElement;
  comparePanel: HTMLElement;
  errorBanner: HTMLElement;
  fieldError: HTMLElement;
  seedLabel: HTMLElement;
}

export function renderSoundList(
  container: HTMLElement,
  sounds: SoundEntry[],
  onToggle: (ids: string[]) => void,
): void {
  container.textContent = "";
  if (sounds.length === 0) {
    const empty = document.createElement("p");
    empty.className = "empty-state";
    empty.textContent = "No sounds in the library.";
    container.appendChild(empty);
    return;
  }
  const selected = new Set<string>();
  for (const sound of sounds) {
    const label = document.createElement("label");
    label.className = "sound-option";
    const box = document.createElement("input");
    box.type = "checkbox";
    box.value = sound.id;
    box.addEventListener("change", () => {
      if (box.checked) {
        if (selected.size >= 2) {
          box.checked = false;
          return;
        }
        selected.add(sound.id);
      } else {
        selected.delete(sound.id);
      }
      onToggle([...selected]);
    });
    label.appendChild(box);
    label.appendChild(
      document.createTextNode(` ${sound.name} (${sound.duration.toFixed(1)} s)`),
    );
    container.appendChild(label);
  }
}

export function renderHistory(
  container: HTMLElement,
  history: readonly HistoryEntry[],
  onReplay: (index: number) => void,
): void {
  container.textContent = "";
  history.forEach((entry, i) => {
    const item = document.createElement("button");
    item.className = "history-entry";
    item.dataset.index = String(i);
    const thumb = document.createElement("img");
    thumb.src = entry.resultUrl;
    thumb.width = 64;
    item.appendChild(thumb);
    const caption = document.createElement("span");
    caption.textContent = describeEntry(entry);
    item.appendChild(caption);
    item.addEventListener("click", () => onReplay(i));
    container.appendChild(item);
  });
}

export function describeEntry(entry: HistoryEntry): string {
  const parts = [
    entry.params.soundIds.join("+"),
    `gain ${entry.params.gain}`,
  ];
  if (entry.params.soundIds.length === 2) parts.push(`alpha ${entry.params.alpha}`);
  return parts.join(", ");
}

export function renderCompare(
  panel: HTMLElement,
  a: HistoryEntry,
  b: HistoryEntry,
): void {
  panel.textContent = "";
  for (const entry of [a, b]) {
    const pane = document.createElement("figure");
    pane.className = "compare-pane";
    const img = document.createElement("img");
    img.src = entry.resultUrl;
    pane.appendChild(img);
    const cap = document.createElement("figcaption");
    cap.textContent = describeEntry(entry);
    pane.appendChild(cap);
    panel.appendChild(pane);
  }
  panel.hidden = false;
}

export class StudioApp {
  readonly session: EditSession;
  private compareSelection: number[] = [];

  constructor(
    private readonly els: StudioElements,
    private readonly client: StudioClient,
    seed?: number,
  ) {
    this.session = new EditSession(client, seed);
    this.els.seedLabel.textContent = String(this.session.seed);
    this.wire();
  }

  private wire(): void {
    const { els } = this;
    els.gainSlider.min = String(GAIN_RANGE[0]);
    els.gainSlider.max = String(GAIN_RANGE[1]);
    els.gainSlider.step = "0.05";
    els.alphaSlider.min = String(ALPHA_RANGE[0]);
    els.alphaSlider.max = String(ALPHA_RANGE[1]);
    els.alphaSlider.step = "0.01";

    els.imageInput.addEventListener("change", () => {
      this.session.image = els.imageInput.files?.[0] ?? null;
    });
    els.gainSlider.addEventListener("input", () => {
      this.session.setGain(Number(els.gainSlider.value));
      els.gainValue.textContent = els.gainSlider.value;
    });
    els.alphaSlider.addEventListener("input", () => {
      this.session.setAlpha(Number(els.alphaSlider.value));
    });
    els.applyButton.addEventListener("click", () => void this.apply());
    els.compareButton.disabled = true;
  }

  async loadSounds(): Promise<void> {
    try {
      const sounds = await this.client.listSounds();
      this.els.errorBanner.hidden = true;
      renderSoundList(this.els.soundList, sounds, (ids) => {
        this.session.setSounds(ids);
        this.els.alphaRow.hidden = ids.length < 2;
      });
    } catch (err) {
      this.showBanner(`Could not load the sound library (${err}).`, () =>
        void this.loadSounds(),
      );
    }
  }

  async apply(): Promise<void> {
    try {
      const entry = await this.session.apply();
      this.showResult(entry);
    } catch (err) {
      this.showError(err);
    }
  }

  async replay(index: number): Promise<void> {
    try {
      const entry = await this.session.replay(index);
      this.showResult(entry);
    } catch (err) {
      this.showError(err);
    }
  }

  toggleCompare(index: number): void {
    this.compareSelection.push(index);
    if (this.compareSelection.length > 2) this.compareSelection.shift();
    if (this.compareSelection.length === 2) {
      const [i, j] = this.compareSelection;
      const history = this.session.getHistory();
      renderCompare(this.els.comparePanel, history[i], history[j]);
    }
  }

  private showResult(entry: HistoryEntry): void {
    this.els.preview.src = entry.resultUrl;
    this.els.fieldError.hidden = true;
    this.els.errorBanner.hidden = true;
    renderHistory(this.els.historyStrip, this.session.getHistory(), (i) =>
      void this.replay(i),
    );
    this.els.compareButton.disabled = this.session.getHistory().length === 0;
  }

  private showError(err: unknown): void {
    if (err instanceof DOMException && err.name === "AbortError") return;
    if (err instanceof FieldError) {
      this.els.fieldError.textContent = `${err.field}: ${err.message}`;
      this.els.fieldError.hidden = false;
    } else if (err instanceof ServerError) {
      this.showBanner(`Server error (request ${err.requestId}).`);
    } else {
      this.showBanner(String(err));
    }
  }

  private showBanner(message: string, retry?: () => void): void {
    const banner = this.els.errorBanner;
    banner.textContent = "";
    banner.appendChild(document.createTextNode(message));
    if (retry) {
      const btn = document.createElement("button");
      btn.textContent = "Retry";
      btn.addEventListener("click", retry);
      banner.appendChild(btn);
    }
    banner.hidden = false;
  }
}
