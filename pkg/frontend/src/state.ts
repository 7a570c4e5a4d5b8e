/**
 * View state and its reducer.
 *
 * The reducer is pure: the rendered views always correspond to the newest
 * received message of each kind, a pending click stays marked until a manual
 * decision confirms it, and the decision log is bounded. Connection handling
 * and canvas drawing live elsewhere.
 */

import { GrayImage, decodePgm } from "./pgm.js";
import { DecisionMsg, ServerMsg } from "./protocol.js";

export interface ViewState {
  connection: "connecting" | "open" | "closed";
  fieldWidth: number;
  fieldHeight: number;
  mode: string;
  tau: number;
  lambda: number;
  pJump: number | null;
  paused: boolean;
  subframe: GrayImage | null;
  subframeIndex: number;
  gridOverlay: GrayImage | null;
  blip: GrayImage | null;
  composite: GrayImage | null;
  compositeKind: "weighted" | "linear" | null;
  exposure: GrayImage | null;
  exposureScale: number;
  decisions: DecisionMsg[];
  pendingClick: { x: number; y: number } | null;
  lastError: string | null;
  timing: Record<string, unknown> | null;
  ended: boolean;
}

export const DECISION_LOG_LIMIT = 200;

export function initialState(): ViewState {
  return {
    connection: "connecting",
    fieldWidth: 0,
    fieldHeight: 0,
    mode: "",
    tau: NaN,
    lambda: NaN,
    pJump: null,
    paused: false,
    subframe: null,
    subframeIndex: -1,
    gridOverlay: null,
    blip: null,
    composite: null,
    compositeKind: null,
    exposure: null,
    exposureScale: 1,
    decisions: [],
    pendingClick: null,
    lastError: null,
    timing: null,
    ended: false,
  };
}

export function applyMessage(state: ViewState, msg: ServerMsg): ViewState {
  switch (msg.type) {
    case "hello":
      return {
        ...state,
        fieldWidth: msg.width,
        fieldHeight: msg.height,
        mode: msg.mode,
        tau: msg.tau,
        lambda: msg.lambda,
      };
    case "subframe":
      return {
        ...state,
        subframe: decodePgm(msg.image_pgm),
        gridOverlay: decodePgm(msg.grid_overlay_pgm),
        subframeIndex: msg.index,
      };
    case "blip":
      return { ...state, blip: decodePgm(msg.image_pgm) };
    case "composite":
      return {
        ...state,
        composite: decodePgm(msg.image_pgm),
        exposure: decodePgm(msg.exposure_pgm),
        exposureScale: msg.exposure_scale_s,
        compositeKind: msg.kind,
      };
    case "decision": {
      const decisions = [...state.decisions, msg].slice(-DECISION_LOG_LIMIT);
      // a manual decision confirms the outstanding click
      const pendingClick = msg.reason === "manual" ? null : state.pendingClick;
      return { ...state, decisions, pendingClick };
    }
    case "status":
      return {
        ...state,
        paused: msg.paused,
        mode: msg.mode,
        tau: msg.tau,
        lambda: msg.lambda,
        pJump: msg.p_jump,
      };
    case "timing":
      return { ...state, timing: msg.report };
    case "end":
      return { ...state, ended: true };
    case "error":
      return { ...state, lastError: msg.message };
  }
}

/** Latch a click; a newer click replaces an unconfirmed older one. */
export function latchClick(state: ViewState, x: number, y: number): ViewState {
  return { ...state, pendingClick: { x, y } };
}

export function setConnection(state: ViewState, connection: ViewState["connection"]): ViewState {
  return { ...state, connection };
}
