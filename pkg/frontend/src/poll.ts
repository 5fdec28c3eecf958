// Receipt and chain polling. Everything the console shows is server state:
// a submitted transaction is only "committed" once GET /v1/tx says so, and
// list views refresh only when the committed height actually moves.

import { ApiClient, ApiError, Receipt } from "./api";

export const POLL_INTERVAL_MS = 2000;

const sleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

export async function pollReceipt(
  api: ApiClient,
  txIdHex: string,
  opts: {
    intervalMs?: number;
    maxAttempts?: number;
    onUpdate?: (receipt: Receipt) => void;
  } = {},
): Promise<Receipt> {
  const intervalMs = opts.intervalMs ?? POLL_INTERVAL_MS;
  const maxAttempts = opts.maxAttempts ?? 60;
  for (let attempt = 0; attempt < maxAttempts; attempt++) {
    await sleep(intervalMs);
    const receipt = (await api.tx(txIdHex)).data;
    opts.onUpdate?.(receipt);
    if (receipt.status !== "pending") return receipt;
  }
  throw new ApiError(0, "timeout", `receipt ${txIdHex} still pending`);
}

export class HeightWatcher {
  private timer: ReturnType<typeof setInterval> | undefined;
  private last = -1;
  private listeners: Array<(height: number) => void> = [];
  private inFlight = false;

  constructor(
    private readonly api: ApiClient,
    private readonly intervalMs: number = POLL_INTERVAL_MS,
  ) {}

  onChange(listener: (height: number) => void): void {
    this.listeners.push(listener);
  }

  start(): void {
    if (this.timer) return;
    const tick = async () => {
      if (this.inFlight) return; // skip a beat rather than stack requests
      this.inFlight = true;
      try {
        const height = (await this.api.chain()).data.height;
        if (height !== this.last) {
          this.last = height;
          for (const listener of this.listeners) listener(height);
        }
      } catch {
        // unreachable node: keep polling, views show their last server state
      } finally {
        this.inFlight = false;
      }
    };
    void tick();
    this.timer = setInterval(() => void tick(), this.intervalMs);
  }

  stop(): void {
    if (this.timer) clearInterval(this.timer);
    this.timer = undefined;
  }
}
