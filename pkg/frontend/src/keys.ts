// Ed25519 session keys on top of WebCrypto. Key files hold the 32-byte
// private seed as hex; wrapping the seed in the fixed PKCS#8 prefix below
// yields a DER document WebCrypto can import, so no ASN.1 library is
// needed. The private key never leaves the browser session.

import { concatBytes, fromHex, toHex } from "./codec";

// DER header for an Ed25519 PrivateKeyInfo whose body is a raw 32-byte seed
const PKCS8_PREFIX = fromHex("302e020100300506032b657004220420");

export interface SessionKey {
  readonly pubkey: Uint8Array;
  readonly pubkeyHex: string;
  sign(message: Uint8Array): Promise<Uint8Array>;
}

export async function importSeed(seedHex: string): Promise<SessionKey> {
  let seed: Uint8Array;
  try {
    seed = fromHex(seedHex.trim());
  } catch {
    throw new Error("key must be hex (the contents of a .key file)");
  }
  if (seed.length !== 32) {
    throw new Error("key files hold a 32-byte seed as hex");
  }
  const priv = await crypto.subtle.importKey(
    "pkcs8",
    concatBytes(PKCS8_PREFIX, seed) as BufferSource,
    { name: "Ed25519" },
    true,
    ["sign"],
  );
  // for OKP keys the private JWK carries the public half in "x"
  const jwk = await crypto.subtle.exportKey("jwk", priv);
  const pubkey = fromBase64Url(jwk.x as string);
  return {
    pubkey,
    pubkeyHex: toHex(pubkey),
    async sign(message: Uint8Array): Promise<Uint8Array> {
      const sig = await crypto.subtle.sign(
        { name: "Ed25519" },
        priv,
        message as BufferSource,
      );
      return new Uint8Array(sig);
    },
  };
}

export async function sha256(data: Uint8Array): Promise<Uint8Array> {
  return new Uint8Array(
    await crypto.subtle.digest("SHA-256", data as BufferSource),
  );
}

export async function sha256Hex(data: Uint8Array): Promise<string> {
  return toHex(await sha256(data));
}

function fromBase64Url(text: string): Uint8Array {
  const bin = atob(text.replace(/-/g, "+").replace(/_/g, "/"));
  const out = new Uint8Array(bin.length);
  for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
  return out;
}
