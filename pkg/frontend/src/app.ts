/** Entry point: model picker, taker flow, and the instructor dashboard. */

import { ApiClient } from "./api.js";
import { InstructorView } from "./instructor.js";
import { TakerView } from "./taker.js";

export function createApp(root: HTMLElement, baseUrl: string): void {
  const api = new ApiClient(baseUrl);
  root.innerHTML = `
    <nav>
      <button id="nav-take">Take a test</button>
      <button id="nav-inspect">Instructor</button>
    </nav>
    <section id="launcher">
      <select id="model-select"></select>
      <button id="start">Start test</button>
    </section>
    <section id="view"></section>
  `;
  const view = root.querySelector<HTMLElement>("#view")!;
  const launcher = root.querySelector<HTMLElement>("#launcher")!;
  const select = root.querySelector<HTMLSelectElement>("#model-select")!;
  const taker = new TakerView(view, api);

  void api.listModels().then((models) => {
    for (const model of models) {
      const option = document.createElement("option");
      option.value = model.model_id;
      option.textContent = `${model.model_id} (${model.kind}, ${model.questions.length} questions)`;
      select.appendChild(option);
    }
  });

  root.querySelector("#start")!.addEventListener("click", () => {
    void taker.start(select.value).then(() => {
      if (taker.session) window.location.hash = `session=${taker.session}`;
    });
  });

  root.querySelector("#nav-take")!.addEventListener("click", () => {
    launcher.style.display = "";
    const match = window.location.hash.match(/session=([0-9a-f]+)/);
    if (match) void taker.resume(match[1]);
  });

  root.querySelector("#nav-inspect")!.addEventListener("click", () => {
    launcher.style.display = "none";
    view.innerHTML = `
      <form id="inspect-form">
        <input id="session-id" placeholder="session id" />
        <input id="token" placeholder="instructor token" type="password" />
        <button type="submit">Inspect</button>
      </form>
      <div id="dashboard"></div>
    `;
    const dashboard = view.querySelector<HTMLElement>("#dashboard")!;
    const instructor = new InstructorView(dashboard, api);
    view.querySelector("#inspect-form")!.addEventListener("submit", (event) => {
      event.preventDefault();
      const sessionId = view.querySelector<HTMLInputElement>("#session-id")!.value;
      const token = view.querySelector<HTMLInputElement>("#token")!.value;
      void instructor.show(sessionId, token);
    });
  });

  // Restore a pending session after a reload.
  const match = window.location.hash.match(/session=([0-9a-f]+)/);
  if (match) void taker.resume(match[1]);
}
