import type { ModelInfo, SessionCreated, UtteranceReply } from "./types.js";

/** Thin typed client over the server's HTTP/JSON contract. */
export class ApiClient {
  constructor(private baseUrl: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(this.baseUrl + path, init);
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = await response.json();
        if (body && typeof body.detail === "string") detail = body.detail;
      } catch {
        /* non-JSON error body */
      }
      throw new Error(`${response.status}: ${detail}`);
    }
    return (await response.json()) as T;
  }

  getModel(): Promise<ModelInfo> {
    return this.request<ModelInfo>("/model");
  }

  createSession(): Promise<SessionCreated> {
    return this.request<SessionCreated>("/session", { method: "POST" });
  }

  sendUtterance(sessionId: string, text: string): Promise<UtteranceReply> {
    return this.request<UtteranceReply>(`/session/${sessionId}/utterance`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ text }),
    });
  }
}
