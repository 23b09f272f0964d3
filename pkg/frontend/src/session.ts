/** Portal session: registration token plus a masked copy of the number.
 *
 * Lives in sessionStorage only (gone when the tab closes). The token is
 * never rendered; the masked number is the only identity shown in the UI.
 */

const TOKEN_KEY = "celltrace.token";
const MASKED_KEY = "celltrace.masked";

export function maskNumber(number: string): string {
  const digits = number.replace(/[^0-9]/g, "");
  const visible = digits.slice(-4);
  return `${number.startsWith("+") ? "+" : ""}${"•".repeat(Math.max(digits.length - 4, 0))}${visible}`;
}

export interface PortalSession {
  token: string;
  maskedNumber: string;
}

export function saveSession(token: string, number: string): PortalSession {
  const masked = maskNumber(number);
  sessionStorage.setItem(TOKEN_KEY, token);
  sessionStorage.setItem(MASKED_KEY, masked);
  return { token, maskedNumber: masked };
}

export function loadSession(): PortalSession | null {
  const token = sessionStorage.getItem(TOKEN_KEY);
  const maskedNumber = sessionStorage.getItem(MASKED_KEY);
  if (token === null || maskedNumber === null) {
    return null;
  }
  return { token, maskedNumber };
}

export function clearSession(): void {
  sessionStorage.removeItem(TOKEN_KEY);
  sessionStorage.removeItem(MASKED_KEY);
}
