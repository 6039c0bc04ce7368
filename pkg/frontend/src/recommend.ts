/** Recommendation panel view models (pure; DOM wiring lives in main.ts). */

import type { PatchRecommendations, RankedEntry, TextRecommendations, TrustResponse } from "./api.js";

export interface PanelEntry {
  key: string;
  score: number;
  support: number;
  tone: "positive" | "negative";
}

export type SortKey = "score" | "support" | "key";

export function panelEntries(block: { positive: RankedEntry[]; negative: RankedEntry[] },
                             sort: SortKey = "score"): PanelEntry[] {
  const rows: PanelEntry[] = [
    ...block.positive.map((e) => ({ ...e, tone: "positive" as const })),
    ...block.negative.map((e) => ({ ...e, tone: "negative" as const })),
  ];
  const compare: Record<SortKey, (a: PanelEntry, b: PanelEntry) => number> = {
    score: (a, b) => b.score - a.score,
    support: (a, b) => b.support - a.support || b.score - a.score,
    key: (a, b) => a.key.localeCompare(b.key),
  };
  return rows.sort(compare[sort]);
}

export interface TrustBadge {
  label: string;
  warning: boolean;
}

export function trustBadge(trust: TrustResponse | null): TrustBadge {
  if (!trust || trust.rho === null) {
    return { label: "trust unavailable", warning: true };
  }
  const pct = Math.round(trust.trust * 100);
  return { label: `trust ${pct}% (rho ${trust.rho.toFixed(2)}, n=${trust.n_pairs})`,
           warning: trust.trust <= 0 };
}

export interface RecommendationView {
  words: PanelEntry[];
  phrases: PanelEntry[];
  patches: PatchRecommendations | null;
}

export function buildView(text: TextRecommendations, patches: PatchRecommendations | null,
                          sort: SortKey = "score"): RecommendationView {
  return {
    words: panelEntries(text.words, sort),
    phrases: panelEntries(text.phrases, sort),
    patches,
  };
}
