/**
 * Wire protocol of the foveasim gateway (schema 1).
 *
 * Every message in both directions carries `schema: 1`. Image payloads are
 * base64-encoded binary PGM (P5). The UI performs no reconstruction math;
 * it renders exactly what the gateway sends and echoes user intent back.
 */

export const SCHEMA = 1;

export type DecisionReason = "manual" | "stochastic" | "motion" | "wavelet" | "hold";

export interface HelloMsg {
  schema: 1;
  type: "hello";
  width: number;
  height: number;
  mode: string;
  duration: number;
  tau: number;
  lambda: number;
}

export interface BlipMsg {
  schema: 1;
  type: "blip";
  index: number;
  t_start: number;
  t_end: number;
  image_pgm: string;
}

export interface SubframeMsg {
  schema: 1;
  type: "subframe";
  index: number;
  t_start: number;
  t_end: number;
  image_pgm: string;
  grid_overlay_pgm: string;
}

export interface DecisionMsg {
  schema: 1;
  type: "decision";
  t: number;
  center: [number, number];
  reason: DecisionReason;
}

export interface CompositeMsg {
  schema: 1;
  type: "composite";
  kind: "weighted" | "linear";
  after_subframe: number;
  image_pgm: string;
  exposure_pgm: string;
  exposure_scale_s: number;
  persisted: boolean;
}

export interface StatusMsg {
  schema: 1;
  type: "status";
  paused: boolean;
  mode: string;
  tau: number;
  lambda: number;
  p_jump: number;
}

export interface TimingMsg {
  schema: 1;
  type: "timing";
  report: Record<string, unknown>;
}

export interface EndMsg {
  schema: 1;
  type: "end";
}

export interface ErrorMsg {
  schema: 1;
  type: "error";
  message: string;
}

export type ServerMsg =
  | HelloMsg
  | BlipMsg
  | SubframeMsg
  | DecisionMsg
  | CompositeMsg
  | StatusMsg
  | TimingMsg
  | EndMsg
  | ErrorMsg;

export type ClientMsg =
  | { schema: 1; type: "click"; x: number; y: number }
  | { schema: 1; type: "mode"; mode: "motion" | "wavelet" | "manual" }
  | { schema: 1; type: "set"; tau?: number; lambda?: number; p_jump?: number }
  | { schema: 1; type: "pause" }
  | { schema: 1; type: "resume" };

const num = (v: unknown): v is number => typeof v === "number" && Number.isFinite(v);
const str = (v: unknown): v is string => typeof v === "string";

/** Narrow an arbitrary decoded JSON value to a ServerMsg, or explain why not. */
export function parseServerMsg(raw: unknown): { msg?: ServerMsg; error?: string } {
  if (typeof raw !== "object" || raw === null) return { error: "not an object" };
  const m = raw as Record<string, unknown>;
  if (m.schema !== SCHEMA) return { error: `unsupported schema ${String(m.schema)}` };
  switch (m.type) {
    case "hello":
      if (num(m.width) && num(m.height) && str(m.mode) && num(m.duration) && num(m.tau) && num(m.lambda))
        return { msg: m as unknown as HelloMsg };
      break;
    case "blip":
      if (num(m.index) && num(m.t_start) && num(m.t_end) && str(m.image_pgm))
        return { msg: m as unknown as BlipMsg };
      break;
    case "subframe":
      if (num(m.index) && num(m.t_start) && num(m.t_end) && str(m.image_pgm) && str(m.grid_overlay_pgm))
        return { msg: m as unknown as SubframeMsg };
      break;
    case "decision": {
      const c = m.center;
      if (num(m.t) && Array.isArray(c) && c.length === 2 && num(c[0]) && num(c[1]) && str(m.reason))
        return { msg: m as unknown as DecisionMsg };
      break;
    }
    case "composite":
      if (
        (m.kind === "weighted" || m.kind === "linear") &&
        num(m.after_subframe) && str(m.image_pgm) && str(m.exposure_pgm) &&
        num(m.exposure_scale_s) && typeof m.persisted === "boolean"
      )
        return { msg: m as unknown as CompositeMsg };
      break;
    case "status":
      if (typeof m.paused === "boolean" && str(m.mode) && num(m.tau) && num(m.lambda) && num(m.p_jump))
        return { msg: m as unknown as StatusMsg };
      break;
    case "timing":
      if (typeof m.report === "object" && m.report !== null) return { msg: m as unknown as TimingMsg };
      break;
    case "end":
      return { msg: { schema: 1, type: "end" } };
    case "error":
      if (str(m.message)) return { msg: m as unknown as ErrorMsg };
      break;
    default:
      return { error: `unknown type ${String(m.type)}` };
  }
  return { error: `malformed ${String(m.type)} message` };
}
