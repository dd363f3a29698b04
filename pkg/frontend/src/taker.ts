/**
 * Test-taker flow: one active question at a time, submit enabled only once
 * an option is picked, final grade shown when the stopping rule fires.
 * All numbers come from the service; the client never computes probabilities.
 */

import {
  ApiClient,
  GradeMap,
  NextPayload,
  SessionExpiredError,
  formatGrade,
} from "./api.js";

export interface TakerCallbacks {
  onFinished?: (grades: GradeMap) => void;
}

export class TakerView {
  private sessionId: string | null = null;
  private selected: string | null = null;
  private busy = false;

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
    private callbacks: TakerCallbacks = {},
  ) {}

  async start(modelId: string): Promise<void> {
    const descriptor = await this.api.createSession(modelId);
    this.sessionId = descriptor.session_id;
    await this.refresh();
  }

  /** Re-attach to an existing session (page reload). */
  async resume(sessionId: string): Promise<void> {
    this.sessionId = sessionId;
    await this.refresh();
  }

  get session(): string | null {
    return this.sessionId;
  }

  async refresh(): Promise<void> {
    if (!this.sessionId) return;
    let payload: NextPayload;
    try {
      payload = await this.api.next(this.sessionId);
    } catch (error) {
      if (error instanceof SessionExpiredError) {
        this.renderExpired();
        return;
      }
      throw error;
    }
    if (payload.finished) {
      const { grades } = await this.api.evaluation(this.sessionId);
      this.renderFinished(grades);
      this.callbacks.onFinished?.(grades);
      return;
    }
    this.renderQuestion(payload);
  }

  private renderQuestion(payload: NextPayload): void {
    const question = payload.question!;
    this.selected = null;
    this.root.innerHTML = "";

    const progress = document.createElement("p");
    progress.className = "progress";
    const answered = payload.progress?.answered ?? 0;
    const total = answered + (payload.progress?.remaining ?? 0);
    progress.textContent = `Question ${answered + 1} of ${total}`;
    this.root.appendChild(progress);

    const prompt = document.createElement("h2");
    prompt.className = "question-text";
    prompt.textContent = question.text;
    this.root.appendChild(prompt);

    const form = document.createElement("form");
    form.className = "options";
    for (const option of question.options) {
      const label = document.createElement("label");
      const radio = document.createElement("input");
      radio.type = "radio";
      radio.name = "option";
      radio.value = option;
      radio.addEventListener("change", () => {
        this.selected = option;
        submit.disabled = false;
      });
      label.appendChild(radio);
      label.appendChild(document.createTextNode(` ${option}`));
      form.appendChild(label);
    }
    this.root.appendChild(form);

    const submit = document.createElement("button");
    submit.className = "submit";
    submit.textContent = "Submit answer";
    submit.disabled = true;
    submit.addEventListener("click", () => {
      void this.submit(question.id, payload.sequence ?? 0);
    });
    this.root.appendChild(submit);
  }

  private async submit(questionId: string, sequence: number): Promise<void> {
    if (!this.sessionId || this.selected === null || this.busy) return;
    this.busy = true;
    try {
      const result = await this.api.submitAnswerWithRetry(
        this.sessionId,
        questionId,
        this.selected,
        sequence,
      );
      if ("conflict" in result) {
        // Someone else advanced the session; re-sync to the server state.
        await this.refresh();
        return;
      }
      await this.refresh();
    } finally {
      this.busy = false;
    }
  }

  private renderFinished(grades: GradeMap): void {
    this.root.innerHTML = "";
    const heading = document.createElement("h2");
    heading.textContent = "Test complete";
    this.root.appendChild(heading);
    const list = document.createElement("ul");
    list.className = "grades";
    for (const [skill, entry] of Object.entries(grades)) {
      const item = document.createElement("li");
      item.className = "grade";
      item.dataset.skill = skill;
      item.textContent = `${skill}: ${formatGrade(entry)}`;
      list.appendChild(item);
    }
    this.root.appendChild(list);
  }

  private renderExpired(): void {
    this.root.innerHTML = "";
    const message = document.createElement("p");
    message.className = "expired";
    message.textContent = "This session has expired. Start a new test.";
    this.root.appendChild(message);
  }
}
