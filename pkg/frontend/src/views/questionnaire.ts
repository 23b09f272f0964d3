import { ApiClient, ApiError, Question, TriageOutcome } from "../api.js";
import { PortalSession, clearSession } from "../session.js";

function verdictScreen(outcome: TriageOutcome): string {
  if (outcome.recommendation === "test_advised") {
    return `
      <section class="card alert" data-view="questionnaire" data-state="test-advised">
        <h2>Please get tested</h2>
        <p>Your answers (${outcome.yes_count} symptom${outcome.yes_count === 1 ? "" : "s"})
           indicate you should take a test as soon as possible.</p>
        <p>Contact your nearest test center, isolate until you have a result,
           and avoid contact with household members where possible.</p>
      </section>
    `;
  }
  return `
    <section class="card ok" data-view="questionnaire" data-state="self-monitor">
      <h2>Keep monitoring</h2>
      <p>Your answers do not currently indicate a test. Watch your symptoms
         and fill the questionnaire again if anything changes.</p>
    </section>
  `;
}

export async function renderQuestionnaire(
  container: HTMLElement,
  api: ApiClient,
  session: PortalSession | null,
): Promise<void> {
  if (session === null) {
    container.innerHTML = `
      <section class="card" data-view="questionnaire" data-state="unregistered">
        <h2>Symptom questionnaire</h2>
        <p>Please register before submitting the questionnaire.</p>
        <a href="#/register" class="button">Register now</a>
      </section>
    `;
    return;
  }
  let questions: Question[];
  try {
    questions = (await api.questionnaireSchema()).questions;
  } catch {
    container.innerHTML = `
      <section class="card error" data-view="questionnaire" data-state="error">
        <p>Could not load the questionnaire. <a href="#/questionnaire">Retry</a></p>
      </section>
    `;
    return;
  }

  const items = questions
    .map(
      (q) => `
      <fieldset data-question="${q.id}">
        <legend>${q.index}. ${q.text}</legend>
        <label><input type="radio" name="${q.id}" value="yes"> Yes</label>
        <label><input type="radio" name="${q.id}" value="no"> No</label>
      </fieldset>`,
    )
    .join("\n");
  container.innerHTML = `
    <section class="card" data-view="questionnaire" data-state="form">
      <h2>Symptom questionnaire</h2>
      <p>Answer all ${questions.length} questions for <strong>${session.maskedNumber}</strong>.</p>
      <form id="questionnaire-form">
        ${items}
        <button type="submit" id="questionnaire-submit" disabled>Submit answers</button>
      </form>
    </section>
  `;
  const form = container.querySelector<HTMLFormElement>("#questionnaire-form")!;
  const submit = container.querySelector<HTMLButtonElement>("#questionnaire-submit")!;

  const answered = () =>
    questions.every(
      (q) => form.querySelector<HTMLInputElement>(`input[name="${q.id}"]:checked`) !== null,
    );
  form.addEventListener("change", () => {
    submit.disabled = !answered();
  });

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    if (!answered()) {
      return;
    }
    const answers: Record<string, boolean> = {};
    for (const q of questions) {
      const checked = form.querySelector<HTMLInputElement>(`input[name="${q.id}"]:checked`)!;
      answers[q.id] = checked.value === "yes";
    }
    api
      .submitQuestionnaire(session.token, answers)
      .then((outcome) => {
        container.innerHTML = verdictScreen(outcome);
      })
      .catch((err: unknown) => {
        if (err instanceof ApiError && err.status === 401) {
          clearSession();
          container.innerHTML = `
            <section class="card" data-view="questionnaire" data-state="expired">
              <p>Your registration expired. <a href="#/register">Register again</a></p>
            </section>
          `;
          return;
        }
        container.innerHTML = `
          <section class="card error" data-view="questionnaire" data-state="error">
            <p>Submission failed. <a href="#/questionnaire">Retry</a></p>
          </section>
        `;
      });
  });
}
