import { ApiClient } from "./api.js";
import { PortalApp } from "./app.js";

function apiBase(): string {
  const meta = document.querySelector<HTMLMetaElement>('meta[name="api-base"]');
  return meta?.content ?? "";
}

const root = document.getElementById("app");
if (root === null) {
  throw new Error("missing #app mount point");
}
new PortalApp(root, new ApiClient(apiBase())).start();
