// Browser-native cryptography only (WebCrypto); no bundled primitives.
// One fixed suite, shared with the platform:
//   ECDSA P-256 / SHA-256 (raw 64-byte r||s signatures)
//   ECDH P-256 (uncompressed 65-byte points)
//   HKDF-SHA256 with fixed domain-separation labels
//   AES-256-GCM with 96-bit nonces

import { asciiBytes, bytesToHex, hexToBytes } from "./canonical.js";

export const SUITE_ID = "peqes-1/p256-ecdsa+ecdh+hkdf-sha256+aes256gcm";

export const HKDF_SALT = "peqes-hkdf-v1";
export const LABEL_SMK = "peqes/smk";
export const LABEL_EK = "peqes/ek";
export const LABEL_SEAL = "peqes/seal";

const subtle = globalThis.crypto.subtle;

// TypeScript's BufferSource typing predates stricter ArrayBuffer generics;
// WebCrypto accepts plain Uint8Array views everywhere we use them.
function buf(view: Uint8Array): ArrayBuffer {
  return view.buffer.slice(view.byteOffset, view.byteOffset + view.byteLength) as ArrayBuffer;
}

export async function verifySignature(
  publicKeyHex: string,
  signatureHex: string,
  message: Uint8Array,
): Promise<boolean> {
  try {
    const key = await subtle.importKey(
      "raw",
      buf(hexToBytes(publicKeyHex)),
      { name: "ECDSA", namedCurve: "P-256" },
      false,
      ["verify"],
    );
    const signature = hexToBytes(signatureHex);
    if (signature.length !== 64) return false;
    return await subtle.verify(
      { name: "ECDSA", hash: "SHA-256" },
      key,
      buf(signature),
      buf(message),
    );
  } catch {
    return false;
  }
}

export interface KxKeyPair {
  privateKey: CryptoKey;
  publicRawHex: string;
}

export async function generateKxPair(): Promise<KxKeyPair> {
  const pair = await subtle.generateKey({ name: "ECDH", namedCurve: "P-256" }, false, [
    "deriveBits",
  ]);
  const raw = new Uint8Array(await subtle.exportKey("raw", pair.publicKey));
  return { privateKey: pair.privateKey, publicRawHex: bytesToHex(raw) };
}

export async function importKxPrivateJwk(jwk: JsonWebKey): Promise<CryptoKey> {
  return subtle.importKey("jwk", jwk, { name: "ECDH", namedCurve: "P-256" }, false, [
    "deriveBits",
  ]);
}

export async function agreeShared(privateKey: CryptoKey, peerPublicHex: string): Promise<Uint8Array> {
  const peer = await subtle.importKey(
    "raw",
    buf(hexToBytes(peerPublicHex)),
    { name: "ECDH", namedCurve: "P-256" },
    false,
    [],
  );
  const bits = await subtle.deriveBits({ name: "ECDH", public: peer }, privateKey, 256);
  return new Uint8Array(bits);
}

export async function deriveKey(
  shared: Uint8Array,
  label: string,
  context: Uint8Array,
): Promise<Uint8Array> {
  if (label !== LABEL_SMK && label !== LABEL_EK && label !== LABEL_SEAL) {
    throw new Error(`unknown derivation label ${label}`);
  }
  const ikm = await subtle.importKey("raw", buf(shared), "HKDF", false, ["deriveBits"]);
  const info = new Uint8Array(label.length + 1 + context.length);
  info.set(asciiBytes(label), 0);
  info[label.length] = 0;
  info.set(context, label.length + 1);
  const bits = await subtle.deriveBits(
    { name: "HKDF", hash: "SHA-256", salt: buf(asciiBytes(HKDF_SALT)), info: buf(info) },
    ikm,
    256,
  );
  return new Uint8Array(bits);
}

export interface CiphertextEnvelope {
  nonce: string;
  body: string;
  tag: string;
}

export function counterNonce(counter: number): Uint8Array {
  const nonce = new Uint8Array(12);
  let value = counter;
  for (let i = 11; i >= 4; i--) {
    nonce[i] = value & 0xff;
    value = Math.floor(value / 256);
  }
  return nonce;
}

export async function aeadEncrypt(
  keyBytes: Uint8Array,
  nonce: Uint8Array,
  plaintext: Uint8Array,
  aad: Uint8Array,
): Promise<CiphertextEnvelope> {
  const key = await subtle.importKey("raw", buf(keyBytes), "AES-GCM", false, ["encrypt"]);
  const sealed = new Uint8Array(
    await subtle.encrypt(
      { name: "AES-GCM", iv: buf(nonce), additionalData: buf(aad), tagLength: 128 },
      key,
      buf(plaintext),
    ),
  );
  return {
    nonce: bytesToHex(nonce),
    body: bytesToHex(sealed.slice(0, sealed.length - 16)),
    tag: bytesToHex(sealed.slice(sealed.length - 16)),
  };
}

export async function aeadDecrypt(
  keyBytes: Uint8Array,
  envelope: CiphertextEnvelope,
  aad: Uint8Array,
): Promise<Uint8Array> {
  const key = await subtle.importKey("raw", buf(keyBytes), "AES-GCM", false, ["decrypt"]);
  const body = hexToBytes(envelope.body);
  const tag = hexToBytes(envelope.tag);
  const sealed = new Uint8Array(body.length + tag.length);
  sealed.set(body, 0);
  sealed.set(tag, body.length);
  const plain = await subtle.decrypt(
    { name: "AES-GCM", iv: buf(hexToBytes(envelope.nonce)), additionalData: buf(aad), tagLength: 128 },
    key,
    buf(sealed),
  );
  return new Uint8Array(plain);
}

export async function keyFingerprint(publicKeyHex: string): Promise<string> {
  const digest = await subtle.digest("SHA-256", buf(hexToBytes(publicKeyHex)));
  return bytesToHex(new Uint8Array(digest)).slice(0, 16);
}
