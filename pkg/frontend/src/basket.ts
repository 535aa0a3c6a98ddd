/**
 * Cohort baskets: an ordered, duplicate-free series list plus the query
 * snapshots it was built from (audit trail). Baskets survive reloads through
 * an injectable storage backend (localStorage in the app, a map in tests).
 */

export interface QuerySnapshot {
  queryText: string;
  total: number;
  takenAt: string;
}

export interface CohortBasket {
  name: string;
  seriesUids: string[];
  snapshots: QuerySnapshot[];
}

export function emptyBasket(name = "cohort"): CohortBasket {
  return { name, seriesUids: [], snapshots: [] };
}

/** Add uids, keeping first-added order and dropping duplicates. */
export function addToBasket(
  basket: CohortBasket,
  uids: string[],
  snapshot?: QuerySnapshot,
): CohortBasket {
  const present = new Set(basket.seriesUids);
  const merged = [...basket.seriesUids];
  for (const uid of uids) {
    if (!present.has(uid)) {
      present.add(uid);
      merged.push(uid);
    }
  }
  return {
    ...basket,
    seriesUids: merged,
    snapshots: snapshot ? [...basket.snapshots, snapshot] : basket.snapshots,
  };
}

export function removeFromBasket(basket: CohortBasket, uid: string): CohortBasket {
  return { ...basket, seriesUids: basket.seriesUids.filter((u) => u !== uid) };
}

/** Line-delimited export: exactly the basket's series, order-stable. */
export function exportSeriesList(basket: CohortBasket): string {
  return basket.seriesUids.join("\n") + (basket.seriesUids.length > 0 ? "\n" : "");
}

export interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

const STORAGE_KEY = "cohort-console.basket";

export function saveBasket(basket: CohortBasket, storage: StorageLike): void {
  storage.setItem(STORAGE_KEY, JSON.stringify(basket));
}

export function loadBasket(storage: StorageLike): CohortBasket {
  const raw = storage.getItem(STORAGE_KEY);
  if (raw === null) return emptyBasket();
  try {
    const parsed = JSON.parse(raw) as CohortBasket;
    if (!Array.isArray(parsed.seriesUids)) return emptyBasket();
    // Re-deduplicate defensively; stored data may predate invariants.
    return addToBasket(
      { ...emptyBasket(parsed.name ?? "cohort"), snapshots: parsed.snapshots ?? [] },
      parsed.seriesUids,
    );
  } catch {
    return emptyBasket();
  }
}
