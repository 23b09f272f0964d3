import { ApiClient, ApiError } from "../api.js";
import { PortalSession, saveSession } from "../session.js";

const NUMBER_PATTERN = /^\+?[0-9][0-9\s\-()]{6,18}$/;

export function renderRegister(
  container: HTMLElement,
  api: ApiClient,
  onRegistered: (session: PortalSession) => void,
): void {
  container.innerHTML = `
    <section class="card" data-view="register">
      <h2>Register</h2>
      <p>Register with your mobile number to check whether it appears on the
         exposure list. Only the number is sent; nothing else is collected.</p>
      <form id="register-form">
        <label>Mobile number
          <input id="register-number" type="tel" autocomplete="tel"
                 placeholder="+8801XXXXXXXXX" required>
        </label>
        <p class="error" id="register-error" hidden></p>
        <button type="submit" id="register-submit">Register</button>
      </form>
    </section>
  `;
  const form = container.querySelector<HTMLFormElement>("#register-form")!;
  const input = container.querySelector<HTMLInputElement>("#register-number")!;
  const error = container.querySelector<HTMLParagraphElement>("#register-error")!;

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const number = input.value.trim();
    if (!NUMBER_PATTERN.test(number)) {
      error.textContent = "Enter a valid mobile number (8-15 digits).";
      error.hidden = false;
      return;
    }
    error.hidden = true;
    api
      .registerUser(number)
      .then(({ token }) => onRegistered(saveSession(token, number)))
      .catch((err: unknown) => {
        error.textContent =
          err instanceof ApiError ? err.message : "Service unavailable; try again.";
        error.hidden = false;
      });
  });
}
