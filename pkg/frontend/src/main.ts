import { ApiClient } from "./api.js";
import { chatBubble, inspectorPanel } from "./render.js";
import type { ModelInfo } from "./types.js";

const api = new ApiClient("");

let sessionId: string | null = null;
let busy = false;

function $(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

function showBanner(text: string, kind: "info" | "error") {
  const banner = $("banner");
  banner.textContent = text;
  banner.className = `banner ${kind}`;
  banner.style.display = "block";
}

function describeModel(info: ModelInfo): string {
  const parts = [info.variant, info.belief];
  if (info.attention) parts.push("attention");
  if (info.snapshot) parts.push("snapshot");
  return `${parts.join(" + ")} · vocab ${info.vocabSize}`;
}

async function startSession(): Promise<void> {
  try {
    const info = await api.getModel();
    showBanner(describeModel(info), "info");
    const created = await api.createSession();
    sessionId = created.sessionId;
    ($("send") as HTMLButtonElement).disabled = false;
  } catch (err) {
    sessionId = null;
    showBanner(`server unavailable: ${String(err)} — retry`, "error");
    const banner = $("banner");
    banner.onclick = () => void startSession();
  }
}

async function send(): Promise<void> {
  const input = $("utterance") as HTMLInputElement;
  const text = input.value.trim();
  if (!text || !sessionId || busy) return;
  busy = true;
  const transcript = $("transcript");
  transcript.appendChild(chatBubble("user", text));
  input.value = "";
  try {
    const reply = await api.sendUtterance(sessionId, text);
    transcript.appendChild(chatBubble("system", reply.surface));
    const turn = document.createElement("div");
    turn.className = "turn-inspector";
    turn.appendChild(inspectorPanel(reply));
    $("inspector-column").appendChild(turn);
    turn.scrollIntoView({ block: "end" });
  } catch (err) {
    const bubble = chatBubble("system", `error: ${String(err)}`);
    bubble.classList.add("error");
    transcript.appendChild(bubble);
  } finally {
    busy = false;
    input.focus();
  }
}

export function wireUp(): void {
  ($("send") as HTMLButtonElement).onclick = () => void send();
  ($("utterance") as HTMLInputElement).onkeydown = (ev) => {
    if (ev.key === "Enter") void send();
  };
  void startSession();
}

if (typeof document !== "undefined" && document.getElementById("send")) {
  wireUp();
}
