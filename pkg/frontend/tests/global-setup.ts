/** Spawns the registry backend with live tracing over the bundled
 * three-operator fixture, seeds it through the public API, and hands the
 * base URL to the tests. */

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { createServer } from "node:net";
import { tmpdir } from "node:os";
import { join, resolve } from "node:path";
import type { TestProject } from "vitest/node";

const FIXTURES = resolve(__dirname, "../../tests/fixtures/three_operators");
const INFECTED_NUMBER = "+8801710000001";

function freePort(): Promise<number> {
  return new Promise((resolvePort, reject) => {
    const server = createServer();
    server.on("error", reject);
    server.listen(0, "127.0.0.1", () => {
      const address = server.address();
      if (address === null || typeof address === "string") {
        reject(new Error("no port assigned"));
        return;
      }
      server.close(() => resolvePort(address.port));
    });
  });
}

function waitForListening(child: ChildProcess): Promise<void> {
  return new Promise((resolveStart, reject) => {
    const timer = setTimeout(() => reject(new Error("backend start timeout")), 30_000);
    let buffered = "";
    child.stdout?.on("data", (chunk: Buffer) => {
      buffered += chunk.toString();
      if (buffered.includes("listening")) {
        clearTimeout(timer);
        resolveStart();
      }
    });
    child.on("exit", (code) => {
      clearTimeout(timer);
      reject(new Error(`backend exited early (code ${code}): ${buffered}`));
    });
  });
}

async function post(base: string, path: string, body: unknown): Promise<any> {
  const response = await fetch(base + path, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(body),
  });
  if (!response.ok) {
    throw new Error(`${path} failed: ${response.status} ${await response.text()}`);
  }
  return response.json();
}

async function seed(base: string): Promise<void> {
  // confirmed positive: starts trace workflows, flags +8801710000002
  const infected = await post(base, "/v1/tests", {
    address: "test center 1",
    numbers: [INFECTED_NUMBER],
  });
  await post(base, `/v1/tests/${infected.record_id}/positive`, {});

  // three positives in one 0.01-degree cell for the area search view
  for (let i = 0; i < 3; i++) {
    const record = await post(base, "/v1/tests", {
      address: `house ${i}`,
      numbers: [`+88018000000${i}0`],
      lat: 23.781,
      lon: 90.402,
    });
    await post(base, `/v1/tests/${record.record_id}/positive`, {});
  }
}

export default async function setup(project: TestProject): Promise<() => void> {
  const dataDir = mkdtempSync(join(tmpdir(), "celltrace-portal-"));
  const port = await freePort();
  const python = process.env.PYTHON ?? "python3";
  const child = spawn(
    python,
    [
      "-m", "celltrace.cli", "serve",
      "--data-dir", dataDir,
      "--port", String(port),
      "--operator-fixtures", FIXTURES,
    ],
    { stdio: ["ignore", "pipe", "inherit"] },
  );
  await waitForListening(child);
  const base = `http://127.0.0.1:${port}`;
  await seed(base);
  project.provide("backendUrl", base);

  return () => {
    child.kill("SIGTERM");
    rmSync(dataDir, { recursive: true, force: true });
  };
}

declare module "vitest" {
  export interface ProvidedContext {
    backendUrl: string;
  }
}
