// Page wiring: load the offer, verify the board approval, render, encrypt,
// submit. Any verification failure is a hard stop: the survey never
// renders over an unverified offer, and nothing leaves the page in clear.
//
// Residual trust assumption (shown in the footer): this code itself is
// delivered by the platform. A malicious platform could ship different
// client code; transparency-log verification of the delivered app is a
// documented non-goal of this client.

import { keyFingerprint } from "./crypto.js";
import {
  encryptAndSubmit,
  loadAndVerify,
  ProtocolFailure,
  StudyOffer,
} from "./protocol.js";
import { collectAnswers, renderSurvey, submissionEnabled } from "./survey.js";

// Build-time default; the field next to it stays visible so participants
// given a board key out-of-band can pin their own.
const DEFAULT_BOARD_PK = "";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function show(id: string): void {
  for (const section of document.querySelectorAll<HTMLElement>("main > section")) {
    section.hidden = section.id !== id;
  }
}

function showAbort(reason: string): void {
  el<HTMLElement>("abort-reason").textContent = reason;
  show("abort");
}

function showError(code: string, detail: string, retriable: boolean): void {
  el<HTMLElement>("error-code").textContent = code;
  el<HTMLElement>("error-detail").textContent = detail;
  el<HTMLButtonElement>("retry").hidden = !retriable;
  show("error");
}

let currentOffer: StudyOffer | null = null;
let submitting = false;

async function load(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const studyId = params.get("study");
  if (!studyId) {
    showAbort("No study id in the URL (expected ?study=<id>).");
    return;
  }
  const boardPk =
    el<HTMLInputElement>("board-pk").value.trim() || DEFAULT_BOARD_PK;
  if (!boardPk) {
    showAbort("No ethics-board key pinned; enter one to verify this study.");
    return;
  }

  show("loading");
  let loaded;
  try {
    loaded = await loadAndVerify(window.location.origin, studyId, boardPk);
  } catch (err) {
    if (err instanceof ProtocolFailure) {
      showError(err.code, err.message, true);
    } else {
      showError("NETWORK", String(err), true);
    }
    return;
  }
  if (!loaded.verified) {
    showAbort(
      "The ethics-board approval on this study does not verify. " +
        "The study design may have been altered after approval; do not answer.",
    );
    return;
  }

  currentOffer = loaded.offer;
  el<HTMLElement>("study-name").textContent = loaded.offer.spec.name;
  el<HTMLElement>("study-description").textContent = loaded.offer.spec.description;
  el<HTMLElement>("approval-fingerprint").textContent = await keyFingerprint(boardPk);
  renderSurvey(loaded.offer.spec, el("survey"));
  show("study");
}

async function submit(): Promise<void> {
  if (!currentOffer || submitting) return;
  const params = new URLSearchParams(window.location.search);
  const studyId = params.get("study")!;
  const draft = collectAnswers(currentOffer.spec, el("survey"));
  if (!submissionEnabled(draft)) {
    el<HTMLElement>("draft-problems").textContent =
      `Please answer all items (missing: ${draft.missing.join(", ") || "none"};` +
      ` out of range: ${draft.invalid.join(", ") || "none"}).`;
    return;
  }
  submitting = true;
  try {
    const receipt = await encryptAndSubmit(
      window.location.origin,
      studyId,
      currentOffer,
      draft.answers,
    );
    el<HTMLElement>("receipt").textContent = receipt.exchangeId;
    show("done");
  } catch (err) {
    if (err instanceof ProtocolFailure) {
      showError(err.code, err.message, err.code === "EXCHANGE_INVALID");
    } else {
      showError("NETWORK", String(err), true);
    }
  } finally {
    submitting = false;
  }
}

export function wire(): void {
  el<HTMLInputElement>("board-pk").value = DEFAULT_BOARD_PK;
  el<HTMLButtonElement>("load").addEventListener("click", () => void load());
  el<HTMLButtonElement>("send").addEventListener("click", () => void submit());
  el<HTMLButtonElement>("retry").addEventListener("click", () => void load());
  void load();
}

if (typeof document !== "undefined" && document.readyState !== "loading") {
  wire();
} else if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", wire);
}
