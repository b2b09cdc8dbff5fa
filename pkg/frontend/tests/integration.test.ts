// End-to-end against the real platform: a study is provisioned through the
// platform's own CLI tools, one participation runs through this client's
// code, and the analysis output proves the server decrypted exactly what
// was entered (the approved script echoes the single answer via mean()).

import { execFile, spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { promisify } from "node:util";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { encryptAndSubmit, loadAndVerify } from "../src/protocol.js";

const run = promisify(execFile);

const PORT = 18734;
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess | null = null;
let workDir: string;
let studyId: string;
let boardPk: string;
let researcherKey: string;

async function waitFor(url: string, timeoutMs = 15000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const response = await fetch(url);
      if (response.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 100));
  }
  throw new Error(`server at ${url} did not come up`);
}

beforeAll(async () => {
  workDir = mkdtempSync(join(tmpdir(), "peqes-webapp-it-"));

  researcherKey = join(workDir, "researcher.json");
  const boardKey = join(workDir, "board.json");
  await run("peqes-researcher", ["keygen", "--out", researcherKey]);
  await run("peqes-board", ["keygen", "--out", boardKey]);
  boardPk = JSON.parse(readFileSync(boardKey, "utf-8")).public;

  server = spawn(
    "peqes-server",
    [
      "--listen", `127.0.0.1:${PORT}`,
      "--data-dir", join(workDir, "data"),
      "--board-pk", boardPk,
    ],
    { stdio: "ignore" },
  );
  await waitFor(`${BASE}/healthz`);

  // a one-item echo study: mean of a single answer is the answer itself;
  // the free-text item carries a sentinel for the network-capture check
  const draft = {
    name: "Webapp interop study",
    description: "One integer item; the analysis echoes its mean.",
    survey: [
      { id: "x1", prompt: "Pick a number", kind: "integer", options: [], min: 1, max: 5 },
      { id: "note", prompt: "Anything to add?", kind: "text", options: [] },
    ],
    analysis: "let m = mean(data.x1)\nlet n = count(data)\noutput m\noutput n\n",
    suite_id: "peqes-1/p256-ecdsa+ecdh+hkdf-sha256+aes256gcm",
    mandate_delete: false,
    sign_result: true,
    target_n: null,
    auto_close_at: null,
  };
  const draftPath = join(workDir, "draft.json");
  const bundlePath = join(workDir, "bundle.json");
  writeFileSync(draftPath, JSON.stringify(draft));
  await run("peqes-researcher", [
    "sign-spec", "--spec", draftPath, "--key", researcherKey, "--out", bundlePath,
  ]);
  const submitted = await run("peqes-researcher", [
    "submit", "--url", BASE, "--bundle", bundlePath, "--key", researcherKey,
  ]);
  studyId = JSON.parse(submitted.stdout).study_id;

  const anchorPath = join(workDir, "anchor.json");
  await run("peqes-board", ["pin", "--url", BASE, "--out", anchorPath]);
  await run("peqes-board", [
    "approve", "--url", BASE, "--study-id", studyId,
    "--key", boardKey, "--trust-anchor", anchorPath,
  ]);
  await run("peqes-researcher", [
    "open", "--url", BASE, "--study-id", studyId, "--key", researcherKey,
  ]);
}, 60000);

afterAll(() => {
  server?.kill();
});

describe("browser client against the live platform", () => {
  it("verifies the offer, submits one encrypted participation, and the platform decrypts it intact", async () => {
    const { offer, verified } = await loadAndVerify(BASE, studyId, boardPk);
    expect(verified).toBe(true);
    expect(offer.phase).toBe("Collecting");

    // capture everything that leaves the client at the network layer
    const sentinel = "SENTINEL-plaintext-must-not-leave-the-browser";
    const sentBodies: string[] = [];
    const realFetch = globalThis.fetch;
    globalThis.fetch = async (input, init) => {
      if (init?.body) sentBodies.push(String(init.body));
      return realFetch(input, init);
    };
    let receipt;
    try {
      receipt = await encryptAndSubmit(BASE, studyId, offer, { x1: 4, note: sentinel });
    } finally {
      globalThis.fetch = realFetch;
    }
    expect(receipt.exchangeId).toMatch(/^[0-9a-f]{32}$/);
    expect(sentBodies.length).toBeGreaterThan(0);
    for (const body of sentBodies) {
      expect(body).not.toContain(sentinel);
      expect(body).not.toContain(Buffer.from(sentinel).toString("hex"));
    }

    const completed = await run("peqes-researcher", [
      "complete", "--url", BASE, "--study-id", studyId, "--key", researcherKey,
    ]);
    const outputs = JSON.parse(completed.stdout).outputs;
    expect(outputs.n).toBe(1);
    expect(outputs.m).toBe(4); // server-side decrypted answer equals what was entered
  }, 30000);

  it("refuses to verify the offer under a different board key", async () => {
    const wrongKey = "04" + "ab".repeat(64);
    const { verified } = await loadAndVerify(BASE, studyId, wrongKey);
    expect(verified).toBe(false);
  });
});
