/** Live round-trip against a local adlens service (the edit -> rescore ->
 * delta loop, plus inserting a top-ranked phrase). Runs only when
 * ADLENS_SERVICE_URL is set; scripts/e2e.sh boots the service and sets it. */

import { describe, expect, it } from "vitest";
import { ApiClient } from "../src/api.js";
import { insertPhrase, Workspace } from "../src/state.js";

const url = process.env.ADLENS_SERVICE_URL;
const live = url ? describe : describe.skip;

live("live service round trip", () => {
  const api = new ApiClient(url ?? "");

  it("edit -> rescore -> delta completes under two seconds", async () => {
    const meta = await api.meta();
    const domain = meta.recommendation_domains[0] ?? meta.domains[0];
    const workspace = new Workspace();
    workspace.draft = { text: meta.vocab[0], image_png_base64: null, domain, features: null };
    const started = Date.now();
    const first = await api.score(workspace.draft, workspace.beginRequest());
    workspace.recordScore(first);
    workspace.draft = { ...workspace.draft, text: `${meta.vocab[0]} ${meta.vocab[1]}` };
    const second = await api.score(workspace.draft, workspace.beginRequest());
    const row = workspace.recordScore(second);
    const elapsed = Date.now() - started;
    expect(row.delta).not.toBeNull();
    expect(elapsed).toBeLessThan(2000);
    expect(workspace.history.length).toBe(2);
  }, 10_000);

  it("no-op edit shows a zero delta", async () => {
    const workspace = new Workspace();
    workspace.draft = { text: "free trial", image_png_base64: null, domain: null, features: null };
    workspace.recordScore(await api.score(workspace.draft));
    const row = workspace.recordScore(await api.score(workspace.draft));
    expect(row.delta).toBe(0);
  }, 10_000);

  it("inserting a top-ranked phrase raises the score", async () => {
    const meta = await api.meta();
    const domain = meta.recommendation_domains[0];
    expect(domain).toBeTruthy();
    const recs = await api.textRecommendations(domain, 10);
    const top = recs.phrases.positive[0] ?? recs.words.positive[0];
    const bottom = recs.words.negative[0];
    const workspace = new Workspace();
    workspace.draft = { text: bottom.key, image_png_base64: null, domain, features: null };
    workspace.recordScore(await api.score(workspace.draft));
    const edited = insertPhrase(workspace.draft.text ?? "", (workspace.draft.text ?? "").length, top.key);
    workspace.draft = { ...workspace.draft, text: edited.text };
    const row = workspace.recordScore(await api.score(workspace.draft));
    expect(row.delta).not.toBeNull();
    expect(row.delta as number).toBeGreaterThan(0);
  }, 10_000);

  it("trust endpoint feeds the badge", async () => {
    const meta = await api.meta();
    const trust = await api.trust("all", "text");
    expect(trust.n_pairs).toBeGreaterThan(0);
    expect(meta.model_digest).toBeTruthy();
  }, 10_000);
});
