// Typed client for the node's /v1 JSON API. Every response keeps the raw
// body text next to the parsed value so views can render exactly what the
// node said (the tracker shows server state, never a local projection).

import { SessionKey, sha256Hex } from "./keys";
import { buildSignedTx, Payload } from "./tx";

export const H_PUBKEY = "X-RMSD-Pubkey";
export const H_TIMESTAMP = "X-RMSD-Timestamp";
export const H_SIGNATURE = "X-RMSD-Signature";

export interface NeedRow {
  need_id: number;
  kind: string;
  amount: number;
  unit: string;
  creator: string;
  personal_ref: string;
  status: string;
  created_at: number;
  approved_by: string | null;
  approved_at: number | null;
}

export interface SupportRow extends Omit<NeedRow, "need_id"> {
  support_id: number;
  shipping: string;
}

export interface RecordListing<T> {
  height: number;
  records: T[];
}

export interface Receipt {
  tx_id: string;
  status: "pending" | "committed" | "rejected";
  height?: number;
  code?: string;
  message?: string;
  personal_ref?: string;
}

export interface ChainInfo {
  height: number;
  tip_hash: string;
  state_digest: string;
  term: number;
  leader: string | null;
  node: string;
  peers: number;
  members: string[];
}

export interface PersonalRecord {
  personal_ref: string;
  name: string;
  phone: string;
  address: string;
  notes: string;
  collected_at: number;
}

export interface ApplicationBody {
  kind: "need" | "support";
  category: string;
  amount: number;
  unit: string;
  shipping?: string;
  personal: { name: string; phone: string; address?: string; notes?: string };
}

export interface ApiResponse<T> {
  status: number;
  raw: string;
  data: T;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }

  // network failures and 5xx both mean "the service cannot answer now"
  get unavailable(): boolean {
    return this.status === 0 || this.status >= 500;
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

// The three signed-request headers; the signature covers
// "<method>\n<path>\n<sha256-hex(body)>\n<timestamp-ms>".
export async function signRequestHeaders(
  key: SessionKey,
  method: string,
  path: string,
  body: Uint8Array,
  timestamp: number = Date.now(),
): Promise<Record<string, string>> {
  const digest = await sha256Hex(body);
  const message = new TextEncoder().encode(
    `${method}\n${path}\n${digest}\n${timestamp}`,
  );
  const signature = await key.sign(message);
  return {
    [H_PUBKEY]: key.pubkeyHex,
    [H_TIMESTAMP]: String(timestamp),
    [H_SIGNATURE]: Array.from(signature, (b) =>
      b.toString(16).padStart(2, "0"),
    ).join(""),
  };
}

export class ApiClient {
  constructor(
    readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(
    method: string,
    path: string,
    opts: { json?: unknown; key?: SessionKey } = {},
  ): Promise<ApiResponse<T>> {
    const body =
      opts.json === undefined
        ? new Uint8Array(0)
        : new TextEncoder().encode(JSON.stringify(opts.json));
    const headers: Record<string, string> = {};
    if (opts.json !== undefined) headers["Content-Type"] = "application/json";
    if (opts.key) {
      Object.assign(
        headers,
        await signRequestHeaders(opts.key, method, path, body),
      );
    }
    let response: Response;
    try {
      response = await this.fetchImpl(this.baseUrl + path, {
        method,
        headers,
        body: opts.json === undefined ? undefined : body,
      });
    } catch (err) {
      throw new ApiError(0, "unreachable", String(err));
    }
    const raw = await response.text();
    let data: unknown;
    try {
      data = JSON.parse(raw);
    } catch {
      throw new ApiError(response.status, "bad_response", raw.slice(0, 200));
    }
    if (!response.ok) {
      const err = data as { code?: string; message?: string };
      throw new ApiError(
        response.status,
        err.code ?? "error",
        err.message ?? raw,
      );
    }
    return { status: response.status, raw, data: data as T };
  }

  // -- public reads --

  needs(): Promise<ApiResponse<RecordListing<NeedRow>>> {
    return this.request("GET", "/v1/needs");
  }

  supports(): Promise<ApiResponse<RecordListing<SupportRow>>> {
    return this.request("GET", "/v1/supports");
  }

  approvedSupports(): Promise<ApiResponse<RecordListing<SupportRow>>> {
    return this.request("GET", "/v1/supports/approved");
  }

  chain(): Promise<ApiResponse<ChainInfo>> {
    return this.request("GET", "/v1/chain");
  }

  tx(txIdHex: string): Promise<ApiResponse<Receipt>> {
    return this.request("GET", `/v1/tx/${txIdHex}`);
  }

  applicationSchema(): Promise<ApiResponse<Record<string, unknown>>> {
    return this.request("GET", "/v1/schema/application");
  }

  nextNonce(pubkeyHex: string): Promise<ApiResponse<{ next_nonce: number }>> {
    return this.request("GET", `/v1/nonce/${pubkeyHex}`);
  }

  // -- authorized reads --

  status(
    kind: "need" | "support",
    id: number,
    key: SessionKey,
  ): Promise<ApiResponse<{ kind: string; id: number; status: string }>> {
    return this.request("GET", `/v1/status/${kind}/${id}`, { key });
  }

  personal(refHex: string, key: SessionKey): Promise<ApiResponse<PersonalRecord>> {
    return this.request("GET", `/v1/personal/${refHex}`, { key });
  }

  // -- writes --

  submitApplication(body: ApplicationBody): Promise<ApiResponse<Receipt>> {
    return this.request("POST", "/v1/applications", { json: body });
  }

  async submitApproval(
    kind: "need" | "support",
    id: number,
    key: SessionKey,
  ): Promise<ApiResponse<Receipt>> {
    const nonce = (await this.nextNonce(key.pubkeyHex)).data.next_nonce;
    const payload: Payload =
      kind === "need"
        ? { op: "approve_need", needId: id }
        : { op: "approve_support", supportId: id };
    const tx = await buildSignedTx(key, nonce, payload);
    return this.request("POST", "/v1/approvals", {
      json: { kind, id, signed_tx: tx.base64 },
    });
  }
}
