// The shared interop fixture must pass byte-exactly in this component too;
// the platform's suite runs the same file through its implementations.

import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import { canonicalBytes, canonicalJson, bytesToHex, hexToBytes, Json } from "../src/canonical.js";
import {
  aeadDecrypt,
  aeadEncrypt,
  agreeShared,
  deriveKey,
  importKxPrivateJwk,
  SUITE_ID,
  verifySignature,
} from "../src/crypto.js";
import { approvalPayload, exchangePayload } from "../src/protocol.js";

const fixturePath = fileURLToPath(
  new URL("../../shared/crypto-vectors.json", import.meta.url),
);
const vectors = JSON.parse(readFileSync(fixturePath, "utf-8"));

describe("shared crypto vectors", () => {
  it("pins the same suite id", () => {
    expect(vectors.suite_id).toBe(SUITE_ID);
  });

  it("canonical JSON matches byte-exactly", () => {
    for (const testCase of vectors.canonical_json) {
      expect(canonicalJson(testCase.value as Json)).toBe(testCase.canonical);
    }
  });

  it("HKDF derivations match", async () => {
    for (const testCase of vectors.hkdf) {
      const key = await deriveKey(
        hexToBytes(testCase.ikm),
        testCase.label,
        hexToBytes(testCase.context),
      );
      expect(bytesToHex(key)).toBe(testCase.key);
    }
  });

  it("AES-GCM framing matches in both directions", async () => {
    for (const testCase of vectors.aead) {
      const envelope = await aeadEncrypt(
        hexToBytes(testCase.key),
        hexToBytes(testCase.nonce),
        hexToBytes(testCase.plaintext),
        hexToBytes(testCase.aad),
      );
      expect(envelope.body).toBe(testCase.body);
      expect(envelope.tag).toBe(testCase.tag);

      const plain = await aeadDecrypt(
        hexToBytes(testCase.key),
        { nonce: testCase.nonce, body: testCase.body, tag: testCase.tag },
        hexToBytes(testCase.aad),
      );
      expect(bytesToHex(plain)).toBe(testCase.plaintext);
    }
  });

  it("ECDH shared secret matches from both sides", async () => {
    const ecdh = vectors.ecdh;
    const privateA = await importKxPrivateJwk(ecdh.private_a_jwk);
    const privateB = await importKxPrivateJwk(ecdh.private_b_jwk);
    expect(bytesToHex(await agreeShared(privateA, ecdh.public_b))).toBe(ecdh.shared);
    expect(bytesToHex(await agreeShared(privateB, ecdh.public_a))).toBe(ecdh.shared);
  });

  it("signed payload constructions and signatures match", async () => {
    const inputs = vectors.signed_inputs;
    const rebuilt: Record<string, Uint8Array> = {
      approval: approvalPayload(inputs.spec, inputs.study_pk),
      exchange: exchangePayload(inputs.exchange_id, inputs.study_pk),
      auth: canonicalBytes({
        action: inputs.auth.action,
        challenge: inputs.auth.challenge,
        study_id: inputs.auth.study_id,
      }),
    };
    const decoder = new TextDecoder();
    for (const testCase of vectors.signed_payloads) {
      expect(decoder.decode(rebuilt[testCase.name])).toBe(testCase.payload);
      expect(
        await verifySignature(testCase.signer_public, testCase.signature, rebuilt[testCase.name]!),
      ).toBe(true);
      const tampered = new TextEncoder().encode(testCase.payload + " ");
      expect(
        await verifySignature(testCase.signer_public, testCase.signature, tampered),
      ).toBe(false);
    }
  });
});
