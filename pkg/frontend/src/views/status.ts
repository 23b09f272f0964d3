import { ApiClient, ApiError } from "../api.js";
import { PortalSession, clearSession } from "../session.js";

export async function renderStatus(
  container: HTMLElement,
  api: ApiClient,
  session: PortalSession | null,
): Promise<void> {
  if (session === null) {
    container.innerHTML = `
      <section class="card" data-view="status" data-state="unregistered">
        <h2>Exposure status</h2>
        <p>You need to register a mobile number first.</p>
        <a href="#/register" class="button">Register now</a>
      </section>
    `;
    return;
  }
  container.innerHTML = `
    <section class="card" data-view="status" data-state="loading">
      <h2>Exposure status</h2>
      <p>Checking status for <strong>${session.maskedNumber}</strong>…</p>
    </section>
  `;
  try {
    const status = await api.status(session.token);
    if (status.status === "not_listed") {
      container.innerHTML = `
        <section class="card ok" data-view="status" data-state="not-listed">
          <h2>Exposure status</h2>
          <p><strong>${session.maskedNumber}</strong> is not on the exposure list.</p>
          <p>No close contact with a confirmed case has been recorded in the
             last 7 days. Keep following local health guidance.</p>
        </section>
      `;
      return;
    }
    if (status.flagged) {
      container.innerHTML = `
        <section class="card alert" data-view="status" data-state="flagged">
          <h2>Exposure status</h2>
          <p><strong>${session.maskedNumber}</strong> appears on the exposure list
             <strong>${status.event_count}</strong> times.</p>
          <p>Repeated proximity to confirmed cases was recorded. Please complete
             the symptom questionnaire now so we can advise your next step.</p>
          <a href="#/questionnaire" class="button" id="status-questionnaire-link">
            Complete the questionnaire</a>
        </section>
      `;
      return;
    }
    container.innerHTML = `
      <section class="card warn" data-view="status" data-state="listed">
        <h2>Exposure status</h2>
        <p><strong>${session.maskedNumber}</strong> appears on the exposure list
           once (${status.event_count} recorded contact).</p>
        <p>A single proximity event was recorded. Watch for symptoms; you can
           complete the <a href="#/questionnaire">questionnaire</a> at any time.</p>
      </section>
    `;
  } catch (err: unknown) {
    if (err instanceof ApiError && err.status === 401) {
      clearSession();
      container.innerHTML = `
        <section class="card" data-view="status" data-state="expired">
          <h2>Exposure status</h2>
          <p>Your registration is no longer valid. Please register again.</p>
          <a href="#/register" class="button">Register again</a>
        </section>
      `;
      return;
    }
    container.innerHTML = `
      <section class="card error" data-view="status" data-state="error">
        <h2>Exposure status</h2>
        <p>The service could not be reached. <a href="#/status">Retry</a></p>
      </section>
    `;
  }
}
