// Feature-annotation stage: three clicks on the reference image, each
// tagged with a property from the fixed list. Click coordinates are
// translated to native image pixels no matter how the image is scaled on
// screen. A fourth click is blocked until a marker is deleted; submission
// unlocks only at exactly three fully-tagged markers.

import { ClickPayload, PROPERTIES } from "./api.js";

export interface Marker {
  nativeX: number;
  nativeY: number;
  property: string | null;
  element: HTMLElement;
}

export class AnnotateStage {
  readonly root: HTMLElement;
  readonly image: HTMLImageElement;
  readonly submitButton: HTMLButtonElement;
  readonly status: HTMLElement;
  markers: Marker[] = [];

  constructor(container: HTMLElement,
              controlUrl: string,
              private nativeSize: { width: number; height: number },
              private onSubmit: (clicks: ClickPayload[]) => void) {
    this.root = document.createElement("div");
    this.root.className = "annotate-stage";

    const frame = document.createElement("div");
    frame.className = "annotate-frame";
    this.image = document.createElement("img");
    this.image.src = controlUrl;
    this.image.className = "annotate-image";
    this.image.addEventListener("click", (ev) => this.handleClick(ev));
    frame.appendChild(this.image);
    this.root.appendChild(frame);

    this.status = document.createElement("p");
    this.status.className = "annotate-status";
    this.root.appendChild(this.status);

    this.submitButton = document.createElement("button");
    this.submitButton.textContent = "Submit";
    this.submitButton.disabled = true;
    this.submitButton.addEventListener("click", () => {
      if (this.isComplete()) this.onSubmit(this.clicks());
    });
    this.root.appendChild(this.submitButton);
    this.refresh();
    container.appendChild(this.root);
  }

  /** Displayed-pixel -> native-pixel mapping via the current layout box. */
  toNative(clientX: number, clientY: number): { x: number; y: number } {
    const rect = this.image.getBoundingClientRect();
    const scaleX = this.nativeSize.width / rect.width;
    const scaleY = this.nativeSize.height / rect.height;
    const x = (clientX - rect.left) * scaleX;
    const y = (clientY - rect.top) * scaleY;
    return {
      x: Math.min(Math.max(x, 0), this.nativeSize.width - 1e-6),
      y: Math.min(Math.max(y, 0), this.nativeSize.height - 1e-6),
    };
  }

  handleClick(ev: MouseEvent): void {
    if (this.markers.length >= 3) return; // blocked until a marker is deleted
    const { x, y } = this.toNative(ev.clientX, ev.clientY);
    const element = document.createElement("span");
    element.className = "marker";
    element.textContent = String(this.markers.length + 1);
    const marker: Marker = { nativeX: x, nativeY: y, property: null, element };
    const select = document.createElement("select");
    const placeholder = document.createElement("option");
    placeholder.value = "";
    placeholder.textContent = "property…";
    select.appendChild(placeholder);
    for (const p of PROPERTIES) {
      const opt = document.createElement("option");
      opt.value = p;
      opt.textContent = p;
      select.appendChild(opt);
    }
    select.addEventListener("change", () => {
      marker.property = select.value || null;
      this.refresh();
    });
    const remove = document.createElement("button");
    remove.textContent = "×";
    remove.addEventListener("click", () => this.removeMarker(marker));
    element.appendChild(select);
    element.appendChild(remove);
    this.root.appendChild(element);
    this.markers.push(marker);
    this.refresh();
  }

  setProperty(index: number, property: string): void {
    const marker = this.markers[index];
    if (!marker) throw new Error(`no marker ${index}`);
    if (!(PROPERTIES as readonly string[]).includes(property)) {
      throw new Error(`unknown property ${property}`);
    }
    marker.property = property;
    this.refresh();
  }

  removeMarker(marker: Marker): void {
    marker.element.remove();
    this.markers = this.markers.filter((m) => m !== marker);
    this.refresh();
  }

  isComplete(): boolean {
    return this.markers.length === 3 && this.markers.every((m) => m.property);
  }

  clicks(): ClickPayload[] {
    return this.markers.map((m) => ({
      x: m.nativeX,
      y: m.nativeY,
      property: m.property as string,
    }));
  }

  private refresh(): void {
    this.submitButton.disabled = !this.isComplete();
    const missing = this.markers.filter((m) => !m.property).length;
    this.status.textContent =
      this.markers.length < 3
        ? `Mark ${3 - this.markers.length} more feature(s)`
        : missing
          ? `Pick a property for ${missing} marker(s)`
          : "Ready to submit";
  }
}
