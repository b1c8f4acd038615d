// Session flow: five question cycles (or until the server reports done),
// each panorama -> choice -> annotate -> submit, with per-question dwell
// measured from question render to submit click.

import { QuestionPayload, ResponsePayload, SurveyApi, submissionToken } from "./api.js";
import { AnnotateStage } from "./annotate.js";
import { ChoiceStage } from "./choice.js";
import { PanoramaPlayer } from "./panorama.js";

export interface SessionHooks {
  onStage?: (stage: "panorama" | "choice" | "annotate" | "done") => void;
  onPanoramaComplete?: (elapsedMs: number) => void;
  onSubmitted?: (result: "stored" | "queued") => void;
  now?: () => number;
}

export class SurveySession {
  completedCount = 0;

  constructor(
    private api: SurveyApi,
    private participant: string,
    private container: HTMLElement,
    private hooks: SessionHooks = {},
  ) {}

  private clock(): number {
    return this.hooks.now ? this.hooks.now() : Date.now();
  }

  /** Run question cycles until the server reports completion. */
  async run(): Promise<number> {
    for (;;) {
      const question = await this.api.nextQuestion(this.participant);
      if (question.done) break;
      await this.runQuestion(question);
      this.completedCount += 1;
    }
    this.container.replaceChildren();
    const done = document.createElement("h2");
    done.textContent = `All done - thank you! (${this.completedCount} questions)`;
    this.container.appendChild(done);
    this.hooks.onStage?.("done");
    return this.completedCount;
  }

  async runQuestion(question: QuestionPayload): Promise<void> {
    const startedAt = this.clock();
    this.container.replaceChildren();
    this.hooks.onStage?.("panorama");

    await new Promise<void>((resolve) => {
      const player = new PanoramaPlayer(
        this.container, question.panorama_url!, question.rotation_ms ?? 10000,
        { onComplete: (elapsed) => {
            this.hooks.onPanoramaComplete?.(elapsed);
            resolve();
          } });
      const note = document.createElement("p");
      note.textContent = "Watch the full rotation of the space…";
      this.container.appendChild(note);
      player.start();
    });

    this.hooks.onStage?.("choice");
    const chosen = await new Promise<string>((resolve) => {
      this.container.replaceChildren();
      const prompt = document.createElement("p");
      prompt.textContent = "Which image of the three is from the same space?";
      this.container.appendChild(prompt);
      new ChoiceStage(this.container, question.choice_urls!, resolve);
    });

    this.hooks.onStage?.("annotate");
    const clicks = await new Promise<ResponsePayload["clicks"]>((resolve) => {
      this.container.replaceChildren();
      const reference = document.createElement("div");
      reference.className = "reference-banner";
      const caption = document.createElement("p");
      caption.textContent =
        "This image is from the space you saw. Mark three features that helped you decide:";
      const refImg = document.createElement("img");
      refImg.src = question.control_url!;
      refImg.className = "reference-image";
      reference.appendChild(caption);
      reference.appendChild(refImg);
      this.container.appendChild(reference);
      new AnnotateStage(
        this.container, question.control_url!,
        { width: question.image_width!, height: question.image_height! },
        resolve);
    });

    const body: ResponsePayload = {
      participant: this.participant,
      question_id: question.question_id!,
      chosen_image: chosen,
      clicks,
      dwell_ms: this.clock() - startedAt,
      token: submissionToken(this.participant, question.question_id!),
    };
    const result = await this.api.submitResponse(body);
    this.hooks.onSubmitted?.(result.status);
  }
}
