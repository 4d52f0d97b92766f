// Bootstraps the review screen: server cursor is the single source of truth,
// so refreshing mid-session resumes exactly where the ledger stands.

import { AnnotationApi, ApiError, type NextResponse } from "./api.js";
import { handleKey, startReview, type ReviewState } from "./flow.js";
import { bannerHtml, decisionHtml, payloadHtml, summaryHtml, typesetMath } from "./render.js";

const api = new AnnotationApi("", sessionIdFromQuery());
let state: ReviewState | null = null;

function sessionIdFromQuery(): string {
  return new URLSearchParams(window.location.search).get("session") ?? "main";
}

function annotator(): string {
  return new URLSearchParams(window.location.search).get("annotator") ?? "";
}

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

async function refresh(): Promise<void> {
  let next: NextResponse;
  try {
    next = await api.next();
  } catch (error) {
    showBanner(error);
    return;
  }
  if (next.done) {
    state = null;
    el("payload").innerHTML = "";
    el("controls").innerHTML = summaryHtml(next.progress);
    return;
  }
  state = startReview(next.candidate_id, next.position, next.total, next.payload);
  el("payload").innerHTML = payloadHtml(next.payload);
  renderControls();
  await typesetMath(el("payload"));
}

function renderControls(): void {
  if (!state) return;
  el("controls").innerHTML = decisionHtml(state);
  wire("btn-accept", "1");
  wire("btn-reject", "0");
  wire("btn-d0", "d0");
  wire("btn-d1", "d1");
  wire("btn-confirm", "Enter");
}

function wire(id: string, key: string): void {
  document.getElementById(id)?.addEventListener("click", () => void onKey(key));
}

function showBanner(error: unknown): void {
  const message =
    error instanceof ApiError
      ? `service error (${error.code}): ${error.message}`
      : "annotation service unreachable";
  el("controls").innerHTML = bannerHtml(message);
  document.getElementById("btn-retry")?.addEventListener("click", () => void refresh());
}

async function onKey(key: string): Promise<void> {
  if (!state) return;
  const [nextState, command] = handleKey(state, key, annotator());
  state = nextState;
  renderControls();
  if (command.kind !== "submit") return;
  try {
    await api.submit(command.body);
  } catch (error) {
    if (error instanceof ApiError && error.code === "sequencing") {
      // session advanced elsewhere: re-sync to the server cursor
      showBanner(error);
      await refresh();
      return;
    }
    showBanner(error);
    return;
  }
  await refresh();
}

document.addEventListener("keydown", (event) => {
  const target = event.target as HTMLElement | null;
  if (target && ["INPUT", "TEXTAREA", "SELECT"].includes(target.tagName)) return;
  if (["0", "1", "Enter", "Escape"].includes(event.key)) {
    event.preventDefault();
    void onKey(event.key);
  }
});

void refresh();
