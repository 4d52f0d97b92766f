// Review-flow state machine: keyboard mapping, gating, request bodies.
import { describe, expect, it } from "vitest";

import type { Payload } from "../src/api.js";
import {
  buildAnnotationBody,
  handleKey,
  readyToConfirm,
  startReview,
  type ReviewState,
} from "../src/flow.js";
import {
  bannerHtml,
  escapeHtml,
  highlightCondition,
  payloadHtml,
  summaryHtml,
  typesetMath,
} from "../src/render.js";

const PAYLOAD: Payload = {
  question: "Original question with $x^2$",
  ground_truth: "42",
  rewritten_question: "Rewritten question missing the radius constraint.",
  rewritten_condition: "the radius constraint",
  unsolvable_reason: "without the radius the area is unconstrained",
};

function fresh(): ReviewState {
  return startReview("cand001", 0, 10, PAYLOAD);
}

function press(state: ReviewState, ...keys: string[]) {
  let current = state;
  let command: ReturnType<typeof handleKey>[1] = { kind: "none" };
  for (const key of keys) {
    [current, command] = handleKey(current, key, "tester");
  }
  return { state: current, command };
}

describe("keyboard flow", () => {
  it("1 selects accept and prompts for difficulty", () => {
    const { state } = press(fresh(), "1");
    expect(state.choice).toBe("accept");
    expect(state.difficulty).toBeNull();
    expect(readyToConfirm(state)).toBe(false);
  });

  it("0 selects reject and is immediately confirmable", () => {
    const { state } = press(fresh(), "0");
    expect(state.choice).toBe("reject");
    expect(readyToConfirm(state)).toBe(true);
  });

  it("difficulty keys work after accept (0/1 and d0/d1)", () => {
    expect(press(fresh(), "1", "0").state.difficulty).toBe(0);
    expect(press(fresh(), "1", "1").state.difficulty).toBe(1);
    expect(press(fresh(), "1", "d0").state.difficulty).toBe(0);
    expect(press(fresh(), "1", "d1").state.difficulty).toBe(1);
  });

  it("escape resets the decision", () => {
    const { state } = press(fresh(), "1", "1", "Escape");
    expect(state.choice).toBeNull();
    expect(state.difficulty).toBeNull();
  });

  it("irrelevant keys are ignored", () => {
    const { state, command } = press(fresh(), "x", "7", " ");
    expect(state.choice).toBeNull();
    expect(command.kind).toBe("none");
  });
});

describe("submission gating", () => {
  it("accept without difficulty is blocked client-side", () => {
    const { state, command } = press(fresh(), "1", "Enter");
    expect(command.kind).toBe("none");
    expect(state.notice).toMatch(/difficulty/);
  });

  it("enter before any choice is blocked", () => {
    const { command } = press(fresh(), "Enter");
    expect(command.kind).toBe("none");
  });

  it("accept + difficulty submits human_check 1 with difficulty_eval", () => {
    const { command } = press(fresh(), "1", "1", "Enter");
    expect(command).toEqual({
      kind: "submit",
      body: { candidate_id: "cand001", human_check: 1, difficulty_eval: 1, annotator: "tester" },
    });
  });

  it("reject submits human_check 0 with no difficulty field", () => {
    const { command } = press(fresh(), "0", "Enter");
    if (command.kind !== "submit") throw new Error("expected submission");
    expect(command.body).toEqual({ candidate_id: "cand001", human_check: 0, annotator: "tester" });
    expect("difficulty_eval" in command.body).toBe(false);
  });

  it("the body builder refuses incomplete states", () => {
    expect(() => buildAnnotationBody(fresh())).toThrow();
    const { state } = press(fresh(), "1");
    expect(() => buildAnnotationBody(state)).toThrow();
  });
});

describe("rendering", () => {
  it("shows all five payload panels", () => {
    const html = payloadHtml(PAYLOAD);
    for (const label of [
      "Original question",
      "Ground truth",
      "Rewritten question",
      "Changed condition",
      "Why it should be unsolvable",
    ]) {
      expect(html).toContain(label);
    }
    expect(html).toContain("42");
  });

  it("highlights the changed condition inside the rewritten question", () => {
    const html = highlightCondition(
      PAYLOAD.rewritten_question,
      PAYLOAD.rewritten_condition,
    );
    expect(html).toContain("<mark>the radius constraint</mark>");
  });

  it("falls back to plain text when the condition is not a substring", () => {
    const html = highlightCondition("something else entirely", "the radius constraint");
    expect(html).not.toContain("<mark>");
  });

  it("escapes markup in payload text", () => {
    const html = payloadHtml({ ...PAYLOAD, question: "<script>alert(1)</script>" });
    expect(html).not.toContain("<script>alert");
    expect(html).toContain("&lt;script&gt;");
  });

  it("escapeHtml handles quotes and ampersands", () => {
    expect(escapeHtml('a & b < c > "d"')).toBe("a &amp; b &lt; c &gt; &quot;d&quot;");
  });

  it("summary screen reports accepted/rejected counts", () => {
    const html = summaryHtml({
      session_id: "main", total: 10, annotated: 10, accepted: 7, rejected: 3, remaining: 0,
    });
    expect(html).toContain("7 accepted");
    expect(html).toContain("3 rejected");
  });

  it("banner offers a retry action", () => {
    expect(bannerHtml("service unreachable")).toContain("btn-retry");
  });
});

describe("math typesetting fallback", () => {
  it("returns raw when MathJax is absent", async () => {
    expect(await typesetMath(null)).toBe("raw");
  });

  it("returns raw when MathJax throws on malformed markup", async () => {
    (globalThis as { MathJax?: unknown }).MathJax = {
      typesetPromise: () => Promise.reject(new Error("bad tex")),
    };
    try {
      expect(await typesetMath({ innerHTML: "$\\frac{$" })).toBe("raw");
    } finally {
      delete (globalThis as { MathJax?: unknown }).MathJax;
    }
  });

  it("typesets when MathJax succeeds", async () => {
    (globalThis as { MathJax?: unknown }).MathJax = {
      typesetPromise: () => Promise.resolve([]),
    };
    try {
      expect(await typesetMath({ innerHTML: "$x$" })).toBe("typeset");
    } finally {
      delete (globalThis as { MathJax?: unknown }).MathJax;
    }
  });
});
