// Review-flow state machine. Pure: the DOM layer feeds key events in and
// executes the returned command. The machine is built so a submission that
// violates the difficulty/decision coupling is unrepresentable: the body
// builder only accepts states the server would acknowledge.

import type { AnnotationBody, Payload } from "./api.js";

export type Choice = "accept" | "reject";
export type Difficulty = 0 | 1;

export interface ReviewState {
  candidateId: string;
  position: number;
  total: number;
  payload: Payload;
  choice: Choice | null;
  difficulty: Difficulty | null;
  notice: string | null;
}

export function startReview(
  candidateId: string,
  position: number,
  total: number,
  payload: Payload,
): ReviewState {
  return { candidateId, position, total, payload, choice: null, difficulty: null, notice: null };
}

export type Command = { kind: "none" } | { kind: "submit"; body: AnnotationBody };

const NONE: Command = { kind: "none" };

export function readyToConfirm(state: ReviewState): boolean {
  if (state.choice === "reject") return true;
  return state.choice === "accept" && state.difficulty !== null;
}

export function buildAnnotationBody(state: ReviewState, annotator = ""): AnnotationBody {
  if (!readyToConfirm(state)) {
    throw new Error("cannot build a submission before the decision is complete");
  }
  if (state.choice === "accept") {
    return {
      candidate_id: state.candidateId,
      human_check: 1,
      difficulty_eval: state.difficulty as Difficulty,
      annotator,
    };
  }
  return { candidate_id: state.candidateId, human_check: 0, annotator };
}

// Keyboard map: 1 accept, 0 reject, then 0/1 (or d0/d1) pick the difficulty,
// Enter confirms, Escape restarts the decision for this candidate.
export function handleKey(state: ReviewState, key: string, annotator = ""): [ReviewState, Command] {
  if (key === "Escape") {
    return [{ ...state, choice: null, difficulty: null, notice: null }, NONE];
  }
  if (key === "Enter") {
    if (!readyToConfirm(state)) {
      const notice =
        state.choice === "accept"
          ? "pick a difficulty (0 or 1) before confirming"
          : "choose accept (1) or reject (0) first";
      return [{ ...state, notice }, NONE];
    }
    return [state, { kind: "submit", body: buildAnnotationBody(state, annotator) }];
  }
  if (state.choice === null) {
    if (key === "1") return [{ ...state, choice: "accept", notice: null }, NONE];
    if (key === "0") return [{ ...state, choice: "reject", notice: null }, NONE];
    return [state, NONE];
  }
  if (state.choice === "accept") {
    if (key === "0" || key === "d0") return [{ ...state, difficulty: 0, notice: null }, NONE];
    if (key === "1" || key === "d1") return [{ ...state, difficulty: 1, notice: null }, NONE];
  }
  return [state, NONE];
}

export interface SessionSummary {
  total: number;
  accepted: number;
  rejected: number;
}
