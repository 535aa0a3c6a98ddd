/**
 * The cohort console: query builder, results table, basket panel.
 *
 * Framework-free DOM code. All async handlers stash their promise on the
 * returned handle (`pending`) so automated tests can await settled state
 * after dispatching real DOM events. The UI never filters results itself:
 * the displayed total is always the server's.
 */

import { ApiClient, ApiError, MappingEntry, SearchResponse } from "./api.js";
import {
  CohortBasket,
  StorageLike,
  addToBasket,
  exportSeriesList,
  loadBasket,
  removeFromBasket,
  saveBasket,
} from "./basket.js";
import {
  PageState,
  hasNext,
  hasPrev,
  nextOffset,
  pageCount,
  pageNumber,
  prevOffset,
} from "./pagination.js";
import {
  PredicateBlock,
  QueryDraft,
  addBlock,
  draftToQueryText,
  emptyDraft,
  removeBlock,
} from "./queryBuilder.js";

const PAGE_LIMIT = 50;

export interface AppHandle {
  /** Last in-flight handler; tests await this after dispatching events. */
  pending: Promise<void>;
  draft(): QueryDraft;
  basket(): CohortBasket;
  /** Content of the most recent basket export (what the download contains). */
  lastExport: string | null;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  if (text !== undefined) node.textContent = text;
  return node;
}

export function mountApp(
  root: HTMLElement,
  client: ApiClient,
  storage: StorageLike = window.localStorage,
): AppHandle {
  let draft = emptyDraft();
  let basket = loadBasket(storage);
  let entries: MappingEntry[] = [];
  let lastResponse: SearchResponse | null = null;
  let page: PageState = { offset: 0, limit: PAGE_LIMIT, total: 0 };
  let lastQueryText: string | null = null;

  root.innerHTML = `
    <section class="builder">
      <h2>Query</h2>
      <div>
        <label>structure
          <select data-testid="structure-picker"></select>
        </label>
        <label>negate <input type="checkbox" data-testid="negate"></label>
        <button data-testid="add-code">Add structure block</button>
      </div>
      <div>
        <label>min volume mm3 <input data-testid="vol-min" size="10"></label>
        <label>max volume mm3 <input data-testid="vol-max" size="10"></label>
        <button data-testid="add-volume">Add volume block</button>
      </div>
      <div>
        <label>combine with
          <select data-testid="combinator">
            <option value="and" selected>and</option>
            <option value="or">or</option>
          </select>
        </label>
      </div>
      <ul data-testid="blocks"></ul>
      <div data-testid="draft-errors" class="errors"></div>
      <div><code data-testid="query-text"></code></div>
      <button data-testid="search">Search</button>
    </section>
    <section class="results">
      <h2>Results</h2>
      <div data-testid="status"></div>
      <div data-testid="total"></div>
      <table>
        <thead>
          <tr><th>date</th><th>series</th><th>patient</th><th>structures</th><th></th></tr>
        </thead>
        <tbody data-testid="rows"></tbody>
      </table>
      <div class="pager">
        <button data-testid="prev">prev</button>
        <span data-testid="page"></span>
        <button data-testid="next">next</button>
        <button data-testid="add-page">Add page to basket</button>
      </div>
    </section>
    <section class="basket">
      <h2>Basket</h2>
      <div data-testid="basket-count"></div>
      <ul data-testid="basket-items"></ul>
      <button data-testid="export">Export series list</button>
    </section>
  `;

  const pick = <T extends HTMLElement>(testId: string): T => {
    const node = root.querySelector(`[data-testid="${testId}"]`);
    if (!node) throw new Error(`missing element ${testId}`);
    return node as T;
  };

  const picker = pick<HTMLSelectElement>("structure-picker");
  const statusBox = pick<HTMLDivElement>("status");
  const handle: AppHandle = {
    pending: Promise.resolve(),
    draft: () => draft,
    basket: () => basket,
    lastExport: null,
  };

  function track(operation: () => Promise<void>): void {
    handle.pending = operation().catch((err) => {
      renderError(err);
    });
  }

  function renderError(err: unknown): void {
    const message =
      err instanceof ApiError ? `[${err.code}] ${err.message}` : String(err);
    statusBox.innerHTML = "";
    statusBox.append(el("span", { class: "error" }, `request failed: ${message} `));
    const retry = el("button", { "data-testid": "retry" }, "retry");
    retry.addEventListener("click", () => {
      if (lastQueryText !== null) runSearch(lastQueryText, page.offset);
    });
    statusBox.append(retry);
  }

  function renderDraft(): void {
    const list = pick<HTMLUListElement>("blocks");
    list.innerHTML = "";
    draft.blocks.forEach(({ block, negated }, index) => {
      const item = el("li", { "data-testid": `block-${index}` });
      item.append(
        el("span", {}, `${negated ? "not " : ""}${describeBlock(block)} `),
      );
      const remove = el("button", {}, "remove");
      remove.addEventListener("click", () => {
        draft = removeBlock(draft, index);
        renderDraft();
      });
      item.append(remove);
      list.append(item);
    });
    const result = draftToQueryText(draft);
    const errorBox = pick<HTMLDivElement>("draft-errors");
    const queryBox = pick<HTMLElement>("query-text");
    if (result.ok) {
      errorBox.textContent = "";
      queryBox.textContent = result.text;
    } else {
      errorBox.textContent = result.errors
        .map((e) => `block ${e.index + 1}: ${e.message}`)
        .join("; ");
      queryBox.textContent = "";
    }
  }

  function describeBlock(block: PredicateBlock): string {
    const display = (code: string) =>
      entries.find((e) => e.snomed_code === code)?.snomed_display ?? code;
    switch (block.kind) {
      case "code":
        return display(block.code);
      case "patient":
        return `patient ${block.pseudonym}`;
      case "date":
        return `date in [${block.min ?? ""}, ${block.max ?? ""}]`;
      case "volume":
        return `${display(block.code)} volume in [${block.min ?? ""}, ${block.max ?? ""}] mm3`;
      case "intensity":
        return `${display(block.code)} intensity in [${block.min ?? ""}, ${block.max ?? ""}]`;
    }
  }

  function renderBasket(): void {
    pick<HTMLDivElement>("basket-count").textContent =
      `${basket.seriesUids.length} series in basket`;
    const list = pick<HTMLUListElement>("basket-items");
    list.innerHTML = "";
    for (const uid of basket.seriesUids) {
      const item = el("li", {}, `${uid} `);
      const remove = el("button", {}, "remove");
      remove.addEventListener("click", () => {
        basket = removeFromBasket(basket, uid);
        saveBasket(basket, storage);
        renderBasket();
      });
      item.append(remove);
      list.append(item);
    }
  }

  function renderResults(): void {
    const body = pick<HTMLTableSectionElement>("rows");
    body.innerHTML = "";
    if (!lastResponse) return;
    pick<HTMLDivElement>("total").textContent = `${lastResponse.total} series match`;
    pick<HTMLSpanElement>("page").textContent =
      `page ${pageNumber(page)} of ${pageCount(page)}`;
    pick<HTMLButtonElement>("prev").disabled = !hasPrev(page);
    pick<HTMLButtonElement>("next").disabled = !hasNext(page);
    for (const row of lastResponse.rows) {
      const tr = el("tr", { "data-uid": row.series_uid });
      tr.append(el("td", {}, row.acquisition_date));
      tr.append(el("td", {}, row.series_uid));
      tr.append(el("td", {}, row.patient_pseudonym));
      tr.append(el("td", {}, String(row.annotation_count)));
      const actions = el("td", {});
      const add = el("button", { "data-testid": `add-${row.series_uid}` }, "basket");
      add.addEventListener("click", () => {
        basket = addToBasket(basket, [row.series_uid], snapshot());
        saveBasket(basket, storage);
        renderBasket();
      });
      actions.append(add);
      tr.append(actions);
      body.append(tr);
    }
  }

  function snapshot() {
    return lastQueryText === null || lastResponse === null
      ? undefined
      : {
          queryText: lastQueryText,
          total: lastResponse.total,
          takenAt: new Date().toISOString(),
        };
  }

  async function runSearch(text: string, offset: number): Promise<void> {
    statusBox.textContent = "searching...";
    const response = await client.search(text, offset, PAGE_LIMIT);
    lastResponse = response;
    lastQueryText = text;
    page = { offset: response.offset, limit: response.limit, total: response.total };
    statusBox.textContent = "";
    renderResults();
  }

  // -- wiring ------------------------------------------------------------

  pick<HTMLButtonElement>("add-code").addEventListener("click", () => {
    const negated = pick<HTMLInputElement>("negate").checked;
    draft = addBlock(draft, { kind: "code", code: picker.value }, negated);
    renderDraft();
  });

  pick<HTMLButtonElement>("add-volume").addEventListener("click", () => {
    const minText = pick<HTMLInputElement>("vol-min").value.trim();
    const maxText = pick<HTMLInputElement>("vol-max").value.trim();
    draft = addBlock(draft, {
      kind: "volume",
      code: picker.value,
      min: minText === "" ? undefined : Number(minText),
      max: maxText === "" ? undefined : Number(maxText),
    });
    renderDraft();
  });

  pick<HTMLSelectElement>("combinator").addEventListener("change", (event) => {
    draft = { ...draft, combinator: (event.target as HTMLSelectElement).value as "and" | "or" };
    renderDraft();
  });

  pick<HTMLButtonElement>("search").addEventListener("click", () => {
    const result = draftToQueryText(draft);
    if (!result.ok) {
      renderDraft();
      return;
    }
    track(() => runSearch(result.text, 0));
  });

  pick<HTMLButtonElement>("next").addEventListener("click", () => {
    if (lastQueryText !== null && hasNext(page)) {
      track(() => runSearch(lastQueryText!, nextOffset(page)));
    }
  });

  pick<HTMLButtonElement>("prev").addEventListener("click", () => {
    if (lastQueryText !== null && hasPrev(page)) {
      track(() => runSearch(lastQueryText!, prevOffset(page)));
    }
  });

  pick<HTMLButtonElement>("add-page").addEventListener("click", () => {
    if (!lastResponse) return;
    basket = addToBasket(basket, lastResponse.hits, snapshot());
    saveBasket(basket, storage);
    renderBasket();
  });

  pick<HTMLButtonElement>("export").addEventListener("click", () => {
    handle.lastExport = exportSeriesList(basket);
    // Object URLs are unavailable in DOM test environments; the exported
    // content is always observable through handle.lastExport.
    if (typeof URL.createObjectURL === "function") {
      const blob = new Blob([handle.lastExport], { type: "text/plain" });
      const link = el("a", {
        href: URL.createObjectURL(blob),
        download: `${basket.name}-series.txt`,
      });
      link.click();
      URL.revokeObjectURL(link.href);
    }
  });

  // Populate the structure picker from the mapping table (display names,
  // not raw concept ids).
  track(async () => {
    entries = await client.mappingEntries();
    picker.innerHTML = "";
    for (const entry of entries) {
      picker.append(el("option", { value: entry.snomed_code }, entry.snomed_display));
    }
  });

  renderDraft();
  renderBasket();
  return handle;
}
