// Three-way choice stage: the participant picks which image comes from
// the space shown in the panorama. Exactly one selection; re-selecting
// replaces the previous pick; advancing is disabled until one exists.

export class ChoiceStage {
  readonly root: HTMLElement;
  readonly continueButton: HTMLButtonElement;
  private selectedUrl: string | null = null;
  private cards: HTMLImageElement[] = [];

  constructor(container: HTMLElement, choiceUrls: string[],
              private onAdvance: (chosenUrl: string) => void) {
    this.root = document.createElement("div");
    this.root.className = "choice-stage";
    const row = document.createElement("div");
    row.className = "choice-row";
    // render strictly in server order: no client-side reshuffle
    for (const url of choiceUrls) {
      const img = document.createElement("img");
      img.src = url;
      img.className = "choice-card";
      img.addEventListener("click", () => this.select(url));
      row.appendChild(img);
      this.cards.push(img);
    }
    this.root.appendChild(row);
    this.continueButton = document.createElement("button");
    this.continueButton.textContent = "Continue";
    this.continueButton.disabled = true;
    this.continueButton.addEventListener("click", () => {
      if (this.selectedUrl) this.onAdvance(this.selectedUrl);
    });
    this.root.appendChild(this.continueButton);
    container.appendChild(this.root);
  }

  get selected(): string | null {
    return this.selectedUrl;
  }

  select(url: string): void {
    this.selectedUrl = url;
    for (const card of this.cards) {
      card.classList.toggle("selected", card.src.endsWith(url));
    }
    this.continueButton.disabled = false;
  }
}
