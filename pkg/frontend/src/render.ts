// HTML generation for the review screen. Pure string builders so the view
// is testable without a browser; main.ts applies them to the document.

import type { Payload, Progress } from "./api.js";
import type { ReviewState } from "./flow.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

// Highlight the changed condition inside the rewritten question when it
// appears verbatim; otherwise the condition panel alone carries it.
export function highlightCondition(question: string, condition: string): string {
  const escaped = escapeHtml(question);
  const target = escapeHtml(condition.trim());
  if (!target || !escaped.includes(target)) return escaped;
  return escaped.split(target).join(`<mark>${target}</mark>`);
}

const PANELS: ReadonlyArray<[keyof Payload, string]> = [
  ["question", "Original question"],
  ["ground_truth", "Ground truth"],
  ["rewritten_question", "Rewritten question"],
  ["rewritten_condition", "Changed condition"],
  ["unsolvable_reason", "Why it should be unsolvable"],
];

export function payloadHtml(payload: Payload): string {
  const panels = PANELS.map(([field, label]) => {
    const body =
      field === "rewritten_question"
        ? highlightCondition(payload.rewritten_question, payload.rewritten_condition)
        : escapeHtml(payload[field]);
    return `<section class="panel panel-${field}"><h2>${label}</h2><div class="math-body">${body}</div></section>`;
  });
  return panels.join("\n");
}

export function decisionHtml(state: ReviewState): string {
  const accept = state.choice === "accept" ? "selected" : "";
  const reject = state.choice === "reject" ? "selected" : "";
  const d0 = state.difficulty === 0 ? "selected" : "";
  const d1 = state.difficulty === 1 ? "selected" : "";
  const difficultyBlock =
    state.choice === "accept"
      ? `<div class="difficulty">
  <span>Difficulty:</span>
  <button id="btn-d0" class="${d0}">0 — obviously unsolvable</button>
  <button id="btn-d1" class="${d1}">1 — needs step-by-step reasoning</button>
  <p class="hint">0 when the missing or contradictory condition is plain at a glance;
  1 when deciding unsolvability takes real reasoning.</p>
</div>`
      : "";
  const notice = state.notice ? `<p class="notice">${escapeHtml(state.notice)}</p>` : "";
  return `<div class="decision">
<p class="progress-line">candidate ${state.position + 1} of ${state.total}</p>
<button id="btn-accept" class="${accept}">1 — unsolvable (accept)</button>
<button id="btn-reject" class="${reject}">0 — not unsolvable (reject)</button>
${difficultyBlock}
<button id="btn-confirm">Enter — confirm</button>
${notice}
</div>`;
}

export function summaryHtml(progress: Progress): string {
  return `<div class="summary">
<h2>Session complete</h2>
<p>${progress.total} candidates reviewed: ${progress.accepted} accepted, ${progress.rejected} rejected.</p>
<p>Export the dataset with <code>relimath annotate export</code> or the export endpoint.</p>
</div>`;
}

export function bannerHtml(message: string): string {
  return `<div class="banner" role="alert">
<p>${escapeHtml(message)}</p>
<button id="btn-retry">Retry</button>
</div>`;
}

interface MathJaxLike {
  typesetPromise?: (nodes?: unknown[]) => Promise<unknown>;
}

// Typeset math in-place when MathJax is available; malformed markup or a
// missing/failed MathJax leaves the raw text untouched.
export async function typesetMath(node: unknown): Promise<"typeset" | "raw"> {
  const mathjax = (globalThis as { MathJax?: MathJaxLike }).MathJax;
  if (!mathjax?.typesetPromise) return "raw";
  try {
    await mathjax.typesetPromise(node ? [node] : undefined);
    return "typeset";
  } catch {
    return "raw";
  }
}
