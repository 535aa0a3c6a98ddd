/**
 * Query drafts: the UI-side predicate blocks and their serialization to the
 * server's query text. A draft emits text only when every block is valid;
 * validation errors stay attached to their block for inline rendering.
 */

export type PredicateBlock =
  | { kind: "code"; code: string }
  | { kind: "patient"; pseudonym: string }
  | { kind: "date"; min?: string; max?: string }
  | { kind: "volume"; code: string; min?: number; max?: number }
  | { kind: "intensity"; code: string; min?: number; max?: number };

export type Combinator = "and" | "or";

export interface QueryDraft {
  combinator: Combinator;
  blocks: { block: PredicateBlock; negated: boolean }[];
}

export interface BlockError {
  index: number;
  message: string;
}

export type DraftResult =
  | { ok: true; text: string }
  | { ok: false; errors: BlockError[] };

export function emptyDraft(combinator: Combinator = "and"): QueryDraft {
  return { combinator, blocks: [] };
}

export function addBlock(
  draft: QueryDraft,
  block: PredicateBlock,
  negated = false,
): QueryDraft {
  return { ...draft, blocks: [...draft.blocks, { block, negated }] };
}

export function removeBlock(draft: QueryDraft, index: number): QueryDraft {
  return { ...draft, blocks: draft.blocks.filter((_, i) => i !== index) };
}

const CODE_RE = /^\d+$/;
const PATIENT_RE = /^[A-Za-z0-9_.\-]+$/;
const DATE_RE = /^\d{4}-\d{2}-\d{2}$/;

export function validateBlock(block: PredicateBlock): string[] {
  const errors: string[] = [];
  switch (block.kind) {
    case "code":
      if (!CODE_RE.test(block.code)) errors.push("pick a structure (numeric concept id)");
      break;
    case "patient":
      if (!PATIENT_RE.test(block.pseudonym)) errors.push("pseudonym has invalid characters");
      break;
    case "date":
      if (block.min !== undefined && !DATE_RE.test(block.min)) errors.push("bad start date");
      if (block.max !== undefined && !DATE_RE.test(block.max)) errors.push("bad end date");
      if (
        block.min !== undefined &&
        block.max !== undefined &&
        DATE_RE.test(block.min) &&
        DATE_RE.test(block.max) &&
        block.min > block.max
      ) {
        errors.push("start date is after end date");
      }
      if (block.min === undefined && block.max === undefined) {
        errors.push("date range needs at least one bound");
      }
      break;
    case "volume":
    case "intensity":
      if (!CODE_RE.test(block.code)) errors.push("pick a structure (numeric concept id)");
      if (block.min !== undefined && !Number.isFinite(block.min)) errors.push("bad minimum");
      if (block.max !== undefined && !Number.isFinite(block.max)) errors.push("bad maximum");
      if (
        block.min !== undefined &&
        block.max !== undefined &&
        Number.isFinite(block.min) &&
        Number.isFinite(block.max) &&
        block.min > block.max
      ) {
        errors.push("minimum exceeds maximum");
      }
      if (block.min === undefined && block.max === undefined) {
        errors.push("range needs at least one bound");
      }
      break;
  }
  return errors;
}

function numText(value: number | undefined): string {
  if (value === undefined) return "";
  return Number.isInteger(value) ? String(value) : String(value);
}

function blockToText(block: PredicateBlock): string {
  switch (block.kind) {
    case "code":
      return `code:${block.code}`;
    case "patient":
      return `patient:${block.pseudonym}`;
    case "date":
      return `date:[${block.min ?? ""},${block.max ?? ""}]`;
    case "volume":
      return `vol:${block.code}:[${numText(block.min)},${numText(block.max)}]`;
    case "intensity":
      return `int:${block.code}:[${numText(block.min)},${numText(block.max)}]`;
  }
}

/**
 * Serialize a draft. The empty draft matches everything; a single block
 * emits bare predicate text; multiple blocks are wrapped in the combinator.
 */
export function draftToQueryText(draft: QueryDraft): DraftResult {
  const errors: BlockError[] = [];
  draft.blocks.forEach(({ block }, index) => {
    for (const message of validateBlock(block)) errors.push({ index, message });
  });
  if (errors.length > 0) return { ok: false, errors };
  if (draft.blocks.length === 0) return { ok: true, text: "all" };
  const parts = draft.blocks.map(({ block, negated }) => {
    const text = blockToText(block);
    return negated ? `not(${text})` : text;
  });
  if (parts.length === 1) return { ok: true, text: parts[0]! };
  return { ok: true, text: `${draft.combinator}(${parts.join(", ")})` };
}
