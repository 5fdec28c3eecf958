// Transaction envelopes, byte-compatible with the node software: the body
// is sender(32) + nonce(u64) + tagged payload, the transaction id is the
// SHA-256 of the body, and the Ed25519 signature covers the body. The wire
// form (id + body + signature) travels base64-encoded in JSON requests.

import {
  concatBytes,
  encFixed,
  encStr,
  encU64,
  encU8,
  toBase64,
  toHex,
} from "./codec";
import { sha256, SessionKey } from "./keys";

const TAG_SET_USER = 0x01;
const TAG_CREATE_NEED = 0x02;
const TAG_CREATE_SUPPORT = 0x03;
const TAG_APPROVE_NEED = 0x04;
const TAG_APPROVE_SUPPORT = 0x05;

export const ROLES = { none: 0, admin: 1, checker: 2, creator: 3 } as const;
export type RoleName = keyof typeof ROLES;

export type Payload =
  | { op: "set_user"; target: Uint8Array; role: RoleName }
  | { op: "create_need"; kind: string; amount: number; unit: string; personalRef: Uint8Array }
  | {
      op: "create_support";
      kind: string;
      amount: number;
      unit: string;
      shipping: string;
      personalRef: Uint8Array;
    }
  | { op: "approve_need"; needId: number }
  | { op: "approve_support"; supportId: number };

export function encodePayload(payload: Payload): Uint8Array {
  switch (payload.op) {
    case "set_user":
      return concatBytes(
        encU8(TAG_SET_USER),
        encFixed(payload.target, 32),
        encU8(ROLES[payload.role]),
      );
    case "create_need":
      return concatBytes(
        encU8(TAG_CREATE_NEED),
        encStr(payload.kind),
        encU64(payload.amount),
        encStr(payload.unit),
        encFixed(payload.personalRef, 32),
      );
    case "create_support":
      return concatBytes(
        encU8(TAG_CREATE_SUPPORT),
        encStr(payload.kind),
        encU64(payload.amount),
        encStr(payload.unit),
        encStr(payload.shipping),
        encFixed(payload.personalRef, 32),
      );
    case "approve_need":
      return concatBytes(encU8(TAG_APPROVE_NEED), encU64(payload.needId));
    case "approve_support":
      return concatBytes(encU8(TAG_APPROVE_SUPPORT), encU64(payload.supportId));
  }
}

export interface SignedTx {
  txIdHex: string;
  base64: string;
}

export async function buildSignedTx(
  key: SessionKey,
  nonce: number,
  payload: Payload,
): Promise<SignedTx> {
  const body = concatBytes(
    encFixed(key.pubkey, 32),
    encU64(nonce),
    encodePayload(payload),
  );
  const txId = await sha256(body);
  const signature = await key.sign(body);
  return {
    txIdHex: toHex(txId),
    base64: toBase64(concatBytes(txId, body, signature)),
  };
}
