/** Client-side editing state. The server is stateless; the iterate-and-compare
 * loop (history, replay, compare) lives here. */

import { StudioClient, StylizeParams, StylizeResult } from "./api.js";

export interface HistoryEntry {
  params: StylizeParams;
  resultUrl: string;
  appliedGain: number;
  appliedAlpha: number | null;
  modelVersion: string;
}

export const GAIN_RANGE: [number, number] = [0, 4];
export const ALPHA_RANGE: [number, number] = [0, 1];

function clamp(v: number, [lo, hi]: [number, number]): number {
  return Math.min(hi, Math.max(lo, v));
}

/** Creates object URLs for result blobs; injectable so tests can avoid
 * URL.createObjectURL. */
export type UrlFactory = (blob: Blob) => string;

export class EditSession {
  image: Blob | null = null;
  soundIds: string[] = [];
  gain = 1.0;
  alpha = 0.5;
  /** Pinned per session so slider sweeps isolate the audio effect. */
  readonly seed: number;

  private readonly history: HistoryEntry[] = [];
  private inFlight: AbortController | null = null;

  constructor(
    private readonly client: StudioClient,
    seed: number = Math.floor(Math.random() * 2 ** 31),
    private readonly makeUrl: UrlFactory = (blob) => URL.createObjectURL(blob),
  ) {
    this.seed = seed;
  }

  setGain(v: number): void {
    this.gain = clamp(v, GAIN_RANGE);
  }

  setAlpha(v: number): void {
    this.alpha = clamp(v, ALPHA_RANGE);
  }

  setSounds(ids: string[]): void {
    if (ids.length > 2) throw new Error("at most 2 sounds");
    this.soundIds = [...ids];
  }

  /** Read-only view; entries are only ever appended. */
  getHistory(): readonly HistoryEntry[] {
    return this.history;
  }

  currentParams(): StylizeParams {
    return {
      soundIds: [...this.soundIds],
      gain: this.gain,
      alpha: this.alpha,
      seed: this.seed,
    };
  }

  /** Stylize under the current parameters. A new submission cancels the
   * pending one; only completed requests reach the history. */
  async apply(): Promise<HistoryEntry> {
    return this.request(this.currentParams());
  }

  /** Re-issue a history entry's exact request. */
  async replay(index: number): Promise<HistoryEntry> {
    const entry = this.history[index];
    if (!entry) throw new Error(`no history entry ${index}`);
    return this.request({
      ...entry.params,
      soundIds: [...entry.params.soundIds],
    });
  }

  private async request(params: StylizeParams): Promise<HistoryEntry> {
    if (!this.image) throw new Error("no image uploaded");
    if (params.soundIds.length < 1) throw new Error("select at least one sound");
    this.inFlight?.abort();
    const controller = new AbortController();
    this.inFlight = controller;
    let result: StylizeResult;
    try {
      result = await this.client.stylize(this.image, params, controller.signal);
    } finally {
      if (this.inFlight === controller) this.inFlight = null;
    }
    const entry: HistoryEntry = {
      params,
      resultUrl: this.makeUrl(result.blob),
      appliedGain: result.appliedGain,
      appliedAlpha: result.appliedAlpha,
      modelVersion: result.modelVersion,
    };
    this.history.push(entry);
    return entry;
  }
}
