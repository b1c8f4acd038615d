// Rotating panorama stage: pans a horizontally repeating equirect strip
// across the viewport exactly once over the configured duration. The
// continue control stays locked until the pan completes.

export interface PanoramaEvents {
  onComplete?: (elapsedMs: number) => void;
}

export class PanoramaPlayer {
  readonly viewport: HTMLElement;
  private strip: HTMLElement;
  private timer: ReturnType<typeof setInterval> | null = null;
  private startedAt = 0;
  private _completed = false;

  constructor(
    container: HTMLElement,
    private imageUrl: string,
    private durationMs: number,
    private events: PanoramaEvents = {},
    private tickMs = 16,
  ) {
    this.viewport = document.createElement("div");
    this.viewport.className = "pano-viewport";
    this.strip = document.createElement("div");
    this.strip.className = "pano-strip";
    this.strip.style.backgroundImage = `url(${imageUrl})`;
    this.strip.style.backgroundRepeat = "repeat-x";
    this.viewport.appendChild(this.strip);
    container.appendChild(this.viewport);
  }

  get completed(): boolean {
    return this._completed;
  }

  /** Current pan progress in [0, 1]. */
  get progress(): number {
    if (this._completed) return 1;
    if (!this.timer) return 0;
    return Math.min((Date.now() - this.startedAt) / this.durationMs, 1);
  }

  start(): void {
    if (this.timer || this._completed) return;
    this.startedAt = Date.now();
    this.timer = setInterval(() => this.tick(), this.tickMs);
  }

  private tick(): void {
    const elapsed = Date.now() - this.startedAt;
    const p = Math.min(elapsed / this.durationMs, 1);
    // one full strip width over the whole animation
    this.strip.style.backgroundPosition = `${(-p * 100).toFixed(3)}% 0`;
    if (p >= 1) {
      this.stop();
      this._completed = true;
      this.events.onComplete?.(elapsed);
    }
  }

  stop(): void {
    if (this.timer) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }
}
