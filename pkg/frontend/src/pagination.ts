/** Offset/limit paging over an exact total (the API never estimates). */

export interface PageState {
  offset: number;
  limit: number;
  total: number;
}

export function pageCount(state: PageState): number {
  return state.total === 0 ? 0 : Math.ceil(state.total / state.limit);
}

export function pageNumber(state: PageState): number {
  return state.total === 0 ? 0 : Math.floor(state.offset / state.limit) + 1;
}

export function hasNext(state: PageState): boolean {
  return state.offset + state.limit < state.total;
}

export function hasPrev(state: PageState): boolean {
  return state.offset > 0;
}

export function nextOffset(state: PageState): number {
  return hasNext(state) ? state.offset + state.limit : state.offset;
}

export function prevOffset(state: PageState): number {
  return Math.max(0, state.offset - state.limit);
}
