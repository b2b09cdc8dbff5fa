// Participant-side protocol: offer verification and the encrypted
// participation exchange. Mirrors the platform's payload constructions
// byte for byte; the shared test-vector fixture pins the agreement.

import { asciiBytes, canonicalBytes, Json } from "./canonical.js";
import {
  agreeShared,
  aeadEncrypt,
  counterNonce,
  deriveKey,
  generateKxPair,
  LABEL_EK,
  verifySignature,
} from "./crypto.js";

export interface SurveyItem {
  id: string;
  prompt: string;
  kind: "choice" | "integer" | "text";
  options: string[];
  min: number | null;
  max: number | null;
}

export interface StudySpec {
  name: string;
  description: string;
  survey: SurveyItem[];
  analysis: string;
  researcher_public: string;
  suite_id: string;
  mandate_delete: boolean;
  sign_result: boolean;
  target_n: number | null;
  auto_close_at: number | null;
}

export interface StudyOffer {
  spec: StudySpec;
  study_pk: string;
  approval: string | null;
  phase: string;
  response_count?: number;
}

export interface ExchangeReply {
  exchange_id: string;
  g_e_pk: string;
  g_sigma: string;
  expiry: number;
}

export type Answers = Record<string, number | string>;

export class ProtocolFailure extends Error {
  constructor(
    public code: string,
    detail: string,
  ) {
    super(`${code}: ${detail}`);
  }
}

export function approvalPayload(spec: Json, studyPkHex: string): Uint8Array {
  return canonicalBytes({ spec, study_pk: studyPkHex });
}

export function exchangePayload(exchangeId: string, enclavePkHex: string): Uint8Array {
  return canonicalBytes({ exchange_id: exchangeId, g_e_pk: enclavePkHex });
}

export function answersPayload(answers: Answers): Uint8Array {
  return canonicalBytes({ answers });
}

export async function verifyStudyOffer(offer: StudyOffer, boardPkHex: string): Promise<boolean> {
  if (!offer.approval) return false;
  try {
    return await verifySignature(
      boardPkHex,
      offer.approval,
      approvalPayload(offer.spec as unknown as Json, offer.study_pk),
    );
  } catch {
    return false;
  }
}

async function checkResponse(response: Response): Promise<Json> {
  if (!response.ok) {
    let code = "HTTP_ERROR";
    let detail = `status ${response.status}`;
    try {
      const body = (await response.json()) as { error?: string; detail?: string };
      if (body.error) {
        code = body.error;
        detail = body.detail ?? "";
      }
    } catch {
      // non-JSON error body; keep the generic code
    }
    throw new ProtocolFailure(code, detail);
  }
  if (response.status === 204) return null;
  return (await response.json()) as Json;
}

export async function loadOffer(baseUrl: string, studyId: string): Promise<StudyOffer> {
  const response = await fetch(`${baseUrl}/api/studies/${studyId}`);
  return (await checkResponse(response)) as unknown as StudyOffer;
}

export interface LoadedStudy {
  offer: StudyOffer;
  verified: boolean;
}

export async function loadAndVerify(
  baseUrl: string,
  studyId: string,
  boardPkHex: string,
): Promise<LoadedStudy> {
  const offer = await loadOffer(baseUrl, studyId);
  const verified = await verifyStudyOffer(offer, boardPkHex);
  return { offer, verified };
}

export interface Receipt {
  exchangeId: string;
}

// The full participation flow: request an exchange, verify the enclave's
// signed ephemeral key under the study key, run ECDH, derive EK, and upload
// the AEAD-sealed answer vector. Nothing is sent unless every check passes.
export async function encryptAndSubmit(
  baseUrl: string,
  studyId: string,
  offer: StudyOffer,
  answers: Answers,
): Promise<Receipt> {
  const exchangeResponse = await fetch(`${baseUrl}/api/studies/${studyId}/exchange`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: "{}",
  });
  const exchange = (await checkResponse(exchangeResponse)) as unknown as ExchangeReply;

  const sigOk = await verifySignature(
    offer.study_pk,
    exchange.g_sigma,
    exchangePayload(exchange.exchange_id, exchange.g_e_pk),
  );
  if (!sigOk) {
    throw new ProtocolFailure("SIGNATURE_INVALID", "exchange key not signed by the study key");
  }

  const kx = await generateKxPair();
  const shared = await agreeShared(kx.privateKey, exchange.g_e_pk);
  const ek = await deriveKey(shared, LABEL_EK, asciiBytes(exchange.exchange_id));
  const ciphertext = await aeadEncrypt(
    ek,
    counterNonce(0),
    answersPayload(answers),
    asciiBytes(exchange.exchange_id),
  );

  const submission = await fetch(`${baseUrl}/api/studies/${studyId}/responses`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify({
      exchange_id: exchange.exchange_id,
      g_p_pk: kx.publicRawHex,
      ciphertext,
    }),
  });
  await checkResponse(submission);
  return { exchangeId: exchange.exchange_id };
}
